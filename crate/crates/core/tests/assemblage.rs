use proptest::prelude::*;
use steer_core::assemblage::{
    born_probabilities, ideal_assemblage, ml_reconstruct, ml_reconstruct_with, validate, Basis, MeasurementSet, MlOptions,
    Outcome, TomographyCounts,
};
use steer_core::linalg::{partial_trace_a, ComplexMatrix, DensityMatrix, C64};

fn singlet_matrix() -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    ComplexMatrix::outer(&[z, C64::new(s, 0.0), C64::new(-s, 0.0), z])
}

fn werner(v: f64) -> DensityMatrix {
    DensityMatrix::new(&singlet_matrix().scale(v) + &ComplexMatrix::identity(4).scale((1.0 - v) / 4.0)).unwrap()
}

#[test]
fn werner_assemblage_is_linear_in_visibility() {
    let m = MeasurementSet::standard(0.8).unwrap();
    let v = 0.37;
    let w = ideal_assemblage(&werner(v), &m).unwrap();
    let s = ideal_assemblage(&werner(1.0), &m).unwrap();
    let mixed = ideal_assemblage(&DensityMatrix::maximally_mixed(4), &m).unwrap();
    assert!(w.max_abs_diff(&s.mix(&mixed, v)) <= 1e-12);
}

#[test]
fn ml_matches_ideal_at_large_counts() {
    let a = ideal_assemblage(&werner(1.0), &MeasurementSet::standard(0.9).unwrap()).unwrap();
    let c = TomographyCounts::from_probabilities(&born_probabilities(&a, &Basis::ALL), a.labels().to_vec(), 1_000_000);
    let r = ml_reconstruct(&c).unwrap();
    assert!(r.max_abs_diff(&a) <= 1e-3, "{}", r.max_abs_diff(&a));
    assert!(validate(&r, 1e-9).passed);
}

#[test]
fn ml_fixed_point() {
    // At η = 0.75 every probability times 10⁶ is an integer, so the counts are
    // exactly proportional to the assemblage's own Born probabilities.
    let a = ideal_assemblage(&werner(1.0), &MeasurementSet::standard(0.75).unwrap()).unwrap();
    let t = born_probabilities(&a, &Basis::ALL);
    let c = TomographyCounts::from_probabilities(&t, a.labels().to_vec(), 1_000_000);
    for x in 0..2 {
        for b in Basis::ALL {
            for o in Outcome::ALL {
                for beta in 0..2 {
                    assert!((c.get(x, o, b, beta) as f64 - t.get(x, b, o, beta) * 1e6).abs() < 1e-6);
                }
            }
        }
    }
    let fit = ml_reconstruct_with(&c, &MlOptions { second_start: true, ..Default::default() }).unwrap();
    assert!(fit.assemblage.max_abs_diff(&a) <= 1e-6, "{}", fit.assemblage.max_abs_diff(&a));
    assert!(fit.second_start_gap.unwrap() <= 1e-6);
}

#[test]
fn ml_fixed_point_mixed_state() {
    let a = ideal_assemblage(&werner(0.6), &MeasurementSet::standard(0.75).unwrap()).unwrap();
    let t = born_probabilities(&a, &Basis::ALL);
    let c = TomographyCounts::from_probabilities(&t, a.labels().to_vec(), 1_000_000);
    let r = ml_reconstruct(&c).unwrap();
    assert!(r.max_abs_diff(&a) <= 1e-6, "{}", r.max_abs_diff(&a));
}

#[test]
fn ml_enforces_non_signaling_on_biased_counts() {
    let a = ideal_assemblage(&werner(0.9), &MeasurementSet::standard(0.7).unwrap()).unwrap();
    let t = born_probabilities(&a, &Basis::ALL);
    let mut c = TomographyCounts::from_probabilities(&t, a.labels().to_vec(), 100_000);
    let x = a.setting_index("X").unwrap();
    for o in Outcome::ALL {
        for b in Basis::ALL {
            for beta in 0..2 {
                let n = c.get(x, o, b, beta);
                c.set(x, o, b, beta, (n as f64 * 1.05).round() as u64);
            }
        }
    }
    // Bias only the X outcome-0 counts so the data itself signals.
    for b in Basis::ALL {
        let n = c.get(x, Outcome::Zero, b, 0);
        c.set(x, Outcome::Zero, b, 0, n + 5000);
    }
    let r = ml_reconstruct(&c).unwrap();
    let rep = validate(&r, 1e-9);
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn ml_log_likelihood_is_monotone() {
    let a = ideal_assemblage(&werner(0.95), &MeasurementSet::standard(0.6).unwrap()).unwrap();
    let t = born_probabilities(&a, &Basis::ALL);
    let mut c = TomographyCounts::from_probabilities(&t, a.labels().to_vec(), 1000);
    c.add(0, Outcome::One, Basis::Y, 0, 17);
    let fit = ml_reconstruct_with(&c, &MlOptions { record_trace: true, ..Default::default() }).unwrap();
    assert!(fit.trace.len() > 2);
    for w in fit.trace.windows(2) {
        assert!(w[1] >= w[0], "{} -> {}", w[0], w[1]);
    }
}

fn arb_state() -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec(-1.0f64..1.0, 32).prop_map(|v| {
        let g = ComplexMatrix::from_vec((0..16).map(|i| C64::new(v[2 * i], v[2 * i + 1])).collect());
        let p = &g * &g.dagger();
        let tr = p.trace().re;
        DensityMatrix::new(p.scale(1.0 / tr).hermitian_part()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginals_equal_reduced_state(rho in arb_state(), eta in 0.0f64..=1.0) {
        let a = ideal_assemblage(&rho, &MeasurementSet::standard(eta).unwrap()).unwrap();
        let rb = partial_trace_a(rho.matrix(), 2, 2).unwrap();
        for x in 0..a.settings() {
            prop_assert!(a.marginal(x).max_abs_diff(&rb) <= 1e-12);
        }
        prop_assert!(validate(&a, 1e-9).passed);
        let t = born_probabilities(&a, &Basis::ALL);
        for x in 0..a.settings() {
            for b in Basis::ALL {
                let s: f64 = Outcome::ALL.iter().map(|&o| t.get(x, b, o, 0) + t.get(x, b, o, 1)).sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }
}

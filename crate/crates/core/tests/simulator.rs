use steer_core::assemblage::{
    born_probabilities, ideal_assemblage, ml_reconstruct, validate, Basis, MeasurementSet, Outcome,
};
use steer_core::simulator::{
    coincidences, raw_bits, simulate_streams, simulate_tomography, werner_state, write_time_tags, ExperimentConfig,
    TimeTag,
};

fn cfg(v: f64, eta_a: f64, trials: u64) -> ExperimentConfig {
    ExperimentConfig { visibility: v, eta_alice: eta_a, trials_certification: trials, ..Default::default() }
}

fn standard() -> MeasurementSet {
    MeasurementSet::standard(1.0).unwrap()
}

#[test]
fn empty_experiment_has_no_counts() {
    let c = simulate_tomography(&cfg(0.99, 0.543, 0), &standard()).unwrap();
    assert_eq!(c.total(), 0);
}

#[test]
fn trial_split_and_determinism() {
    let c = cfg(0.9, 0.7, 1_000_004);
    let a = simulate_tomography(&c, &standard()).unwrap();
    let b = simulate_tomography(&c, &standard()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total(), 1_000_004);
    let per: Vec<u64> = (0..2).flat_map(|x| Basis::ALL.map(|bb| a.total_per_config(x, bb))).collect();
    assert_eq!(per, [166_668, 166_668, 166_667, 166_667, 166_667, 166_667]);
    let other = simulate_tomography(&ExperimentConfig { rng_seed: 2, ..c }, &standard()).unwrap();
    assert_ne!(a, other);
}

#[test]
fn singlet_is_anticorrelated_in_z() {
    let m = standard();
    let c = simulate_tomography(&cfg(1.0, 1.0, 1_000_000), &m).unwrap();
    let z = m.labels().iter().position(|l| l == "Z").unwrap();
    let same = c.get(z, Outcome::Zero, Basis::Z, 0) + c.get(z, Outcome::One, Basis::Z, 1);
    assert_eq!(same, 0);
    assert!(c.get(z, Outcome::Zero, Basis::Z, 1) > 0);
}

#[test]
fn frequencies_converge_to_born_rule() {
    let (v, eta) = (0.9, 0.6);
    let n = 1_000_000u64;
    let m = standard();
    let c = simulate_tomography(&cfg(v, eta, 6 * n), &m).unwrap();
    let a = ideal_assemblage(&werner_state(v).unwrap(), &m.with_eta(eta).unwrap()).unwrap();
    let t = born_probabilities(&a, &Basis::ALL);
    for x in 0..2 {
        for b in Basis::ALL {
            assert_eq!(c.total_per_config(x, b), n);
            for o in Outcome::ALL {
                for beta in 0..2 {
                    let p = t.get(x, b, o, beta);
                    let f = c.get(x, o, b, beta) as f64 / n as f64;
                    let sigma = (p * (1.0 - p) / n as f64).sqrt();
                    assert!((f - p).abs() <= 5.0 * sigma + 1e-12, "x {x} {b:?} {o:?} {beta}: {f} vs {p}");
                }
            }
        }
    }
}

#[test]
fn reconstructions_of_simulated_data_validate() {
    for (v, eta, seed) in [(0.99, 0.543, 1), (0.8, 0.9, 2), (1.0, 0.6, 3)] {
        let c = simulate_tomography(&ExperimentConfig { rng_seed: seed, ..cfg(v, eta, 100_000) }, &standard()).unwrap();
        let a = ml_reconstruct(&c).unwrap();
        let rep = validate(&a, 1e-7);
        assert!(rep.passed, "V {v} eta {eta}: {rep:?}");
    }
}

fn stream_cfg(eta_a: f64) -> ExperimentConfig {
    ExperimentConfig { visibility: 1.0, eta_alice: eta_a, eta_bob: 1.0, pair_rate: 1e5, duration_rng: 1.0, ..Default::default() }
}

#[test]
fn total_loss_means_no_alice_tags() {
    let s = simulate_streams(&stream_cfg(0.0), &standard()).unwrap();
    assert!(s.alice.is_empty());
    assert!(!s.bob.is_empty());
}

#[test]
fn heralding_efficiency_is_recovered() {
    let c = stream_cfg(0.543);
    let s = simulate_streams(&c, &standard()).unwrap();
    let pairs = coincidences(&s.alice, &s.bob, c.coincidence_window).unwrap();
    let n = s.bob.len() as f64;
    let est = pairs.len() as f64 / n;
    let sigma = (0.543 * 0.457 / n).sqrt();
    assert!((est - 0.543).abs() < 5.0 * sigma, "{est}");
    assert!((s.emitted as f64 - 1e5).abs() < 5.0 * 1e5f64.sqrt());
}

#[test]
fn streams_are_reproducible() {
    let c = stream_cfg(0.543);
    let bytes = |tags: &[TimeTag]| {
        let mut buf = Vec::new();
        write_time_tags(&mut buf, &[], tags).unwrap();
        buf
    };
    let a = simulate_streams(&c, &standard()).unwrap();
    let b = simulate_streams(&c, &standard()).unwrap();
    assert_eq!(bytes(&a.alice), bytes(&b.alice));
    assert_eq!(bytes(&a.bob), bytes(&b.bob));
    assert!(a.alice.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
}

#[test]
fn recovered_pairs_match_ground_truth() {
    // 10⁴ pairs/s with a 3 ns window: accidental overlap probability ≈ 6·10⁻⁵.
    let c = ExperimentConfig { pair_rate: 1e4, duration_rng: 10.0, ..stream_cfg(0.8) };
    let s = simulate_streams(&c, &standard()).unwrap();
    let pairs = coincidences(&s.alice, &s.bob, c.coincidence_window).unwrap();
    let truth: std::collections::HashSet<(usize, usize)> = s.truth.iter().map(|p| (p.alice, p.bob)).collect();
    let hits = pairs.iter().filter(|p| truth.contains(&(p.alice_index, p.bob_index))).count();
    assert!(hits as f64 >= 0.999 * pairs.len() as f64, "{hits} of {}", pairs.len());
    assert!(pairs.len() as f64 >= 0.999 * truth.len() as f64);
}

#[test]
fn pairing_is_shift_invariant() {
    let c = ExperimentConfig { dark_rate: 2e3, ..stream_cfg(0.7) };
    let s = simulate_streams(&c, &standard()).unwrap();
    let shift = |tags: &[TimeTag]| -> Vec<TimeTag> {
        tags.iter().map(|t| TimeTag { timestamp: t.timestamp + 123_456_789, ..*t }).collect()
    };
    let p0 = coincidences(&s.alice, &s.bob, c.coincidence_window).unwrap();
    let p1 = coincidences(&shift(&s.alice), &shift(&s.bob), c.coincidence_window).unwrap();
    let idx = |p: &[steer_core::simulator::Coincidence]| p.iter().map(|c| (c.alice_index, c.bob_index)).collect::<Vec<_>>();
    assert_eq!(idx(&p0), idx(&p1));
}

#[test]
fn raw_bits_are_unbiased_for_singlet() {
    let c = ExperimentConfig { eta_alice: 1.0, rng_setting: "X".into(), ..stream_cfg(1.0) };
    let s = simulate_streams(&c, &standard()).unwrap();
    let bits = raw_bits(&coincidences(&s.alice, &s.bob, c.coincidence_window).unwrap());
    let n = bits.len() as f64;
    let p1 = bits.count_ones() as f64 / n;
    assert!((p1 - 0.5).abs() < 5.0 * (0.25 / n).sqrt(), "{p1} over {n}");
}

#[test]
fn unknown_rng_setting_is_rejected() {
    let c = ExperimentConfig { rng_setting: "Y".into(), ..stream_cfg(0.5) };
    assert!(simulate_streams(&c, &standard()).is_err());
}

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steer_core::certification::uncertainty;
use steer_core::extractor::ExtractorParams;
use steer_core::simulator::{simulate_tomography, ExperimentConfig};
use steer_core::{BitString, Execution, MeasurementSet};

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> BitString {
    BitString::from_bools(&(0..n).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
}

fn extraction(c: &mut Criterion) {
    let p = ExtractorParams::new(20000, 0.042, 1e-6).unwrap();
    let tr = p.trevisan().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let source = random_bits(&mut rng, p.n);
    let seed = random_bits(&mut rng, p.d);
    let mut g = c.benchmark_group("extract_20000_bits");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| tr.extract(&source, &seed, exec).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let cfg = ExperimentConfig { visibility: 1.0, eta_alice: 0.6, trials_certification: 100_000, ..Default::default() };
    let counts = simulate_tomography(&cfg, &MeasurementSet::standard(1.0).unwrap()).unwrap();
    let mut g = c.benchmark_group("bootstrap_100_resamples");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| uncertainty(&counts, 100, 7, 0, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, extraction, bootstrap);
criterion_main!(benches);

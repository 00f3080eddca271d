//! Ensemble throughput with one worker against the default pool.
//!
//! Built without the `parallel` feature, both groups run the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sgld::samplers::{run_ensemble_summaries, ChainConfig, SamplerKind};
use sgld::targets::{make_shifted_mixture, TargetModel};

fn double_well_six() -> TargetModel {
    let shifts: Vec<Vec<f64>> = [-0.3, -0.2, -0.1, 0.1, 0.2, 0.3].iter().map(|s| vec![*s]).collect();
    make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &shifts).unwrap()
}

fn ensemble(c: &mut Criterion) {
    let model = double_well_six();
    let cfg = ChainConfig::new(0.01, 1.0, 2, 20_000).with_seed(7);
    let chains = 64;
    let mut group = c.benchmark_group("sgld_ensemble_64x20k");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_function(BenchmarkId::new("rayon", 1), |b| {
            b.iter(|| single.install(|| run_ensemble_summaries(&model, &cfg, SamplerKind::Sgld, chains).unwrap()))
        });
        let threads = rayon::current_num_threads();
        group.bench_function(BenchmarkId::new("rayon", threads), |b| {
            b.iter(|| run_ensemble_summaries(&model, &cfg, SamplerKind::Sgld, chains).unwrap())
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| run_ensemble_summaries(&model, &cfg, SamplerKind::Sgld, chains).unwrap())
    });

    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use num_bigint::BigInt;
use opplab_core::expansion::{expand, Scheme};
use opplab_core::law::{run_series, SeriesConfig, StatSpec, WeightScheme};
use opplab_core::sampler::sample_trajectory_with;
use opplab_core::{Mode, ModelSpec, Rational, RngStreamKey, SamplerOptions};

fn trajectories(c: &mut Criterion) {
    let mut g = c.benchmark_group("trajectory");
    for (model, mode, n) in [
        (ModelSpec::luroth(), Mode::Fast, 10_000),
        (ModelSpec::engel(), Mode::Fast, 10_000),
        (ModelSpec::engel(), Mode::Exact, 200),
        (ModelSpec::sylvester(), Mode::Exact, 12),
    ] {
        g.throughput(Throughput::Elements(n as u64));
        let opts = SamplerOptions::new(mode);
        g.bench_with_input(BenchmarkId::new(format!("{}-{mode:?}", model.name), n), &n, |b, &n| {
            let mut stream = 0;
            b.iter(|| {
                stream += 1;
                black_box(sample_trajectory_with(&model, n, RngStreamKey::new(1, stream), opts).unwrap())
            })
        });
    }
    g.finish();
}

fn expansions(c: &mut Criterion) {
    let x = Rational::new(BigInt::from(314_159), BigInt::from(1_000_003));
    let mut g = c.benchmark_group("expand");
    for scheme in [Scheme::Luroth, Scheme::Engel, Scheme::Sylvester] {
        g.bench_function(scheme.name(), |b| b.iter(|| black_box(expand(&x, scheme, 64).unwrap())));
    }
    g.finish();
}

fn series(c: &mut Criterion) {
    let w = WeightScheme::new(1.0, 0.0, 1.0, 1.0, 2.0, 1).unwrap();
    let cfg = SeriesConfig {
        spec: StatSpec::Thm1 { w },
        n_grid: vec![100, 1000, 10_000],
        replications: 20,
        seed: 7,
        opts: SamplerOptions::new(Mode::Fast),
        epsilons: vec![0.1],
        centering_replications: 0,
    };
    let model = ModelSpec::luroth();
    c.bench_function("series/thm1-luroth-20x1e4", |b| b.iter(|| black_box(run_series(&model, &cfg).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = trajectories, expansions, series
}
criterion_main!(benches);

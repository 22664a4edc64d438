use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use refracta::analytics;
use refracta::simulate::{estimate_passage_transform, estimate_value, SimConfig};
use refracta::{LevyModel, ScaleContext, TaxRate, Theta};

fn scale(c: &mut Criterion) {
    let m = LevyModel::cramer_lundberg(0.7).unwrap();
    let ctx = ScaleContext::new(&m, 0.01).unwrap();
    c.bench_function("scale/context", |b| {
        b.iter(|| ScaleContext::new(black_box(&m), 0.01).unwrap())
    });
    c.bench_function("scale/eval", |b| {
        b.iter(|| ctx.eval(Theta::Finite(1.0), black_box(2.5)))
    });
    c.bench_function("value/v(0.5)", |b| {
        b.iter(|| analytics::value_v(&ctx, Theta::Finite(1.0), 1.0, black_box(0.5)).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let m = LevyModel::cramer_lundberg(0.7).unwrap();
    let cfg = SimConfig::new(1, 10_000);
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.bench_function("passage/g0.5/1e4", |b| {
        b.iter(|| {
            estimate_passage_transform(
                &m,
                &TaxRate::Constant(0.5),
                0.01,
                Theta::Finite(1.0),
                1.0,
                2.0,
                &cfg,
            )
            .unwrap()
        })
    });
    g.bench_function("value/g1/1e4", |b| {
        b.iter(|| estimate_value(&m, 1.0, 0.01, Theta::Finite(1.0), 1.0, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, scale, engine);
criterion_main!(benches);

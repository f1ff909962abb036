use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pkf_core::simulate::{rng_for, sample_poisson};
use std::hint::black_box;

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_poisson");
    // both sides of the inversion/rejection switch, and the rates seen in practice
    for lambda in [0.026, 1.0, 9.5, 10.0, 26.0, 728.6] {
        let mut rng = rng_for(1, 0);
        group.bench_with_input(BenchmarkId::from_parameter(lambda), &lambda, |b, &l| {
            b.iter(|| sample_poisson(black_box(l), &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, poisson);
criterion_main!(benches);

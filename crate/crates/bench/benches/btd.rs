use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spopf_bench::random_btd;

fn factor_and_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("btd_factor_solve");
    for k in [20, 40, 80, 160] {
        let (a, rhs) = random_btd(k, 6, 7);
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |bench, _| {
            bench.iter(|| a.factor().unwrap().solve(&rhs))
        });
    }
    group.finish();
}

fn dense_reference(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense_lu_solve");
    for k in [20, 40, 80] {
        let (a, rhs) = random_btd(k, 6, 7);
        let dense = a.to_dense();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |bench, _| {
            bench.iter(|| dense.clone().lu().solve(&rhs).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, factor_and_solve, dense_reference);
criterion_main!(benches);

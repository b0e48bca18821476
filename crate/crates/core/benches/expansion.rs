//! Exact expansion and oracle cost per order.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lbm_ce::dispersion::{amplification_series, exact_check, slow_log_series};
use lbm_ce::expansion::expand;
use lbm_ce::scheme::builtin;

fn expansion_by_order(c: &mut Criterion) {
    let scheme = builtin("d2q9-oblique").unwrap();
    let mut group = c.benchmark_group("expand_d2q9");
    group.sample_size(20);
    for order in 1..=4 {
        group.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &o| b.iter(|| expand(&scheme, o).unwrap()));
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    for name in ["d2q9-oblique", "d1q3-acoustics"] {
        let scheme = builtin(name).unwrap();
        group.bench_function(BenchmarkId::new("slow_log_series", name), |b| {
            b.iter(|| slow_log_series(&amplification_series(&scheme).unwrap()).unwrap())
        });
        let result = expand(&scheme, 4).unwrap();
        group.bench_function(BenchmarkId::new("exact_check", name), |b| b.iter(|| exact_check(&scheme, &result).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, expansion_by_order, oracle);
criterion_main!(benches);

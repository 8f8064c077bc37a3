use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hitlbo_bench::{clique, reduced};

fn decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode");
    for n in [10usize, 20, 30] {
        let rf = reduced(clique(n, 3), 9);
        let mid = rf.domain_size() / 2 + 1;
        group.bench_with_input(BenchmarkId::from_parameter(n), &mid, |b, &x| b.iter(|| rf.decode(black_box(x))));
    }
    group.finish();
}

fn eval_sweep(c: &mut Criterion) {
    let rf = reduced(clique(12, 4), 1);
    c.bench_function("eval all 4096 points", |b| {
        b.iter(|| (1..=rf.domain_size()).map(|x| rf.eval(x).unwrap()).fold(0.0, f64::max))
    });
}

fn brute_force(c: &mut Criterion) {
    let inst = clique(16, 8);
    c.bench_function("brute force n=16", |b| b.iter(|| inst.brute_force_optimum(0.0).unwrap()));
}

criterion_group!(benches, decode, eval_sweep, brute_force);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pseudoweight::growth;
use pseudoweight::oracle::{enumerate_pseudocodewords, ParityCheckMatrix};
use pseudoweight::{EnsembleParams, Execution, Problem, SolverConfig};

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for m in [1usize, 2, 3] {
        let problem = Problem::new(
            EnsembleParams::new(3, 6, m).unwrap(),
            SolverConfig::default(),
        )
        .unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(
                BenchmarkId::new(name, format!("M={m}")),
                &exec,
                |b, &exec| {
                    b.iter(|| growth::sweep(black_box(&problem), 0.01, 0.98, 24, exec).unwrap())
                },
            );
        }
    }
    group.finish();
}

fn cone_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("cone_scan");
    group.sample_size(10);
    let h = ParityCheckMatrix::spc(6);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::new(name, "spc6 M=3"), &exec, |b, &exec| {
            b.iter(|| enumerate_pseudocodewords(black_box(&h), 3, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, cone_scan);
criterion_main!(benches);

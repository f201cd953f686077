use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use driftlab::verify::{self, BoxOptions, SourceSpec};
use driftlab::{par, qcore, walk, DriftField, Exec, TorusShape};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let shape = TorusShape::new(&[6, 2]).unwrap();
    let b = DriftField::random(&shape, 0.2, 1).unwrap();
    let mut g = c.benchmark_group("mc_estimate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "6x2"), |bench| {
            bench.iter(|| walk::estimate_q_mc(&b, 10_000, 200, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn field_sweep(c: &mut Criterion) {
    let shape = TorusShape::new(&[8, 4]).unwrap();
    let mut g = c.benchmark_group("field_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "8x4"), |bench| {
            bench.iter(|| {
                par::map_indexed(exec, 64, |seed| {
                    let b = DriftField::random(&shape, 0.2, seed as u64).unwrap();
                    qcore::q_report(&b, Exec::Sequential).unwrap().q()
                })
            })
        });
    }
    g.finish();
}

fn omega_sweep(c: &mut Criterion) {
    let shape = TorusShape::new(&[8]).unwrap();
    let b = DriftField::random(&shape, 0.25, 3).unwrap();
    let f = SourceSpec::gaussian(1.0, &[0.0]).unwrap();
    let q = qcore::q_value(&b).unwrap();
    let opts = BoxOptions::default();
    let mut g = c.benchmark_group("omega_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "d1"), |bench| {
            bench.iter(|| verify::convergence_report_with_q(&b, &f, &[0.1, 0.05], q, &opts, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, field_sweep, omega_sweep);
criterion_main!(benches);

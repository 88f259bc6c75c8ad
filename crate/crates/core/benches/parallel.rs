//! One worker against the default pool on the hot paths: DtN assembly and
//! solve, the frozen sector report, and a tensor-grid Hölder sweep.
//! Build with `--no-default-features` to time the sequential fallback.

use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stripflow::dtn::{frozen_set, sector_report, DtnEvaluator};
use stripflow::geometry::InterfaceProfile;
use stripflow::grid::PeriodicGrid;
use stripflow::holder::TensorGrid;
use stripflow::operator::SectorialOperator;
use stripflow::par;

fn setup() -> (InterfaceProfile, SectorialOperator) {
    let x = PeriodicGrid::new(128, 2.0 * PI).unwrap();
    let p = InterfaceProfile::from_fn(1.0, x, 1, |_, v| 0.1 * v.sin() + 0.03 * (3.0 * v).cos())
        .unwrap();
    (p, SectorialOperator::diagonal(&[1.0], 1.5, 4.0).unwrap())
}

fn pools() -> Vec<(&'static str, Option<usize>)> {
    let mut v = vec![("1-thread", Some(1))];
    if par::parallel_enabled() {
        v.push(("default", None));
    }
    v
}

fn dtn(c: &mut Criterion) {
    let (p, a) = setup();
    let mut g = c.benchmark_group("dtn_evaluator_128x33");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || DtnEvaluator::new(&p, &a, 0.0, 33).unwrap()).unwrap()
            })
        });
    }
    g.finish();
}

fn sector(c: &mut Criterion) {
    let (p, a) = setup();
    let set = frozen_set(&p, &a, 0, 0.0, 33).unwrap();
    let mut g = c.benchmark_group("sector_report_128");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || sector_report(&set, &a, 4.0, 0.5, 8, 1).unwrap())
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn holder(c: &mut Criterion) {
    let (p, a) = setup();
    let ev = DtnEvaluator::new(&p, &a, 0.0, 17).unwrap();
    let tg = TensorGrid::new(128, 2.0 * PI, ev.grid().y().nodes().to_vec());
    let u = ev.upsilon().node_major();
    let mut g = c.benchmark_group("holder_sweep_128x17");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || tg.holder(&[&u], 1, 0.5).unwrap()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dtn, sector, holder);
criterion_main!(benches);

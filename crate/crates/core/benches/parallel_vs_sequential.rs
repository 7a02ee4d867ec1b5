use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dyncomm::analysis::check_trajectory_invariants;
use dyncomm::scenario::builtin;
use dyncomm::{integrate, integrate_many, Execution, Scenario};

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { jobs: None }),
    ]
}

/// Eight seasonal variants with different hawk-dove payoffs.
fn sweep_batch() -> Vec<Scenario> {
    let doc = builtin("seasonal").unwrap();
    (0..8)
        .map(|i| {
            let overrides = [
                ("game.payoff.0.1".to_string(), 6.5 + 0.25 * i as f64),
                ("integrator.t_end".to_string(), 20.0),
            ];
            doc.with_overrides(&overrides).unwrap().build().unwrap()
        })
        .collect()
}

fn bench_sweep(c: &mut Criterion) {
    let batch = sweep_batch();
    let mut group = c.benchmark_group("sweep_8_runs");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| integrate_many(black_box(&batch), *exec))
        });
    }
    group.finish();
}

fn bench_invariants(c: &mut Criterion) {
    let mut scenario = builtin("seasonal").unwrap().build().unwrap();
    scenario.integrator.record_every = 10;
    let traj = integrate(&scenario).unwrap();
    let mut group = c.benchmark_group("invariant_suite");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| {
                check_trajectory_invariants(&scenario.model, black_box(&traj), None, *exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_invariants);
criterion_main!(benches);

//! Per-sample solve time of the three controller configurations, the
//! counterpart of the closed-loop timing report.

use criterion::{criterion_group, criterion_main, Criterion};

use maglev_nmpc::controllers::ControllerConfig;
use maglev_nmpc::model::ControllerState;
use maglev_nmpc_bench::controller;

fn bench_control_step(c: &mut Criterion) {
    let meas = ControllerState {
        ds: 2e-4,
        dz2: -1e-4,
        v1: 0.01,
        v2: -0.005,
        di: 0.05,
    };
    let mut group = c.benchmark_group("control_step");
    group.sample_size(30);
    for cfg in [
        ControllerConfig::c1m(),
        ControllerConfig::c2m(),
        ControllerConfig::c2ml(),
    ] {
        // Warm the instance past the cold-start transient once; the bench
        // then measures steady receding-horizon solves.
        let mut ctrl = controller(&cfg);
        for _ in 0..5 {
            ctrl.control_step(&meas).unwrap();
        }
        group.bench_function(&cfg.name, |b| {
            b.iter(|| ctrl.control_step(std::hint::black_box(&meas)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_control_step);
criterion_main!(benches);

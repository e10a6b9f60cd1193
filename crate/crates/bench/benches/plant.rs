//! Plant-side building blocks: RK4 step with sensitivities and the Riccati
//! sweep of the structured QP.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};

use maglev_nmpc::model::{solve_equilibrium, LevitationModel, ModelKind};
use maglev_nmpc::ocp::{solve_qp_riccati, QpStage, QpTerminal};
use maglev_nmpc::odeint::discretize_variational;
use maglev_nmpc_bench::default_setup;

fn bench_discretize(c: &mut Criterion) {
    let (mech, magnet) = default_setup();
    let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).unwrap();
    let model = LevitationModel::new(ModelKind::TwoMass, mech, magnet, eq).unwrap();
    let f = |x: &DVector<f64>, u: &DVector<f64>| model.derivative(x, u[0]);
    let jac = |x: &DVector<f64>, u: &DVector<f64>| {
        model.derivative_jacobians(x, u[0]).map(|(fx, fu)| {
            (fx, DMatrix::from_column_slice(fu.len(), 1, fu.as_slice()))
        })
    };
    let x = DVector::from_vec(vec![1e-4, -2e-4, 0.01, 0.0, 0.1]);
    let u = DVector::from_vec(vec![3.0]);
    c.bench_function("rk4_variational_two_mass", |b| {
        b.iter(|| discretize_variational(&f, &jac, std::hint::black_box(&x), &u, 1e-3, 1).unwrap())
    });
}

fn bench_riccati(c: &mut Criterion) {
    let n = 5;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.01 * (i + j) as f64 });
    let b_mat = DMatrix::from_fn(n, 1, |i, _| 0.1 + 0.01 * i as f64);
    let stage = QpStage {
        a,
        b: b_mat,
        d: DVector::zeros(n),
        hx: DMatrix::identity(n, n),
        hu: DMatrix::identity(1, 1),
        gx: DVector::from_element(n, 0.1),
        gu: DVector::from_element(1, 0.1),
    };
    let stages = vec![stage; 50];
    let terminal = QpTerminal::zero(n);
    let r0 = DVector::from_element(n, 1e-3);
    c.bench_function("riccati_sweep_n5_horizon50", |b| {
        b.iter(|| solve_qp_riccati(std::hint::black_box(&stages), &terminal, &r0, None, None).unwrap())
    });
}

criterion_group!(benches, bench_discretize, bench_riccati);
criterion_main!(benches);

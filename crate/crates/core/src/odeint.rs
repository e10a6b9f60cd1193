//! Fixed-step explicit Runge–Kutta integration and discrete-time
//! sensitivities for the shooting transcription.
//!
//! Sensitivities are obtained by forward differences on the integrator
//! itself rather than by variational equations; the perturbation per
//! column is `sqrt(eps)·max(1, |component|)` and the result tracks central
//! differences of the integrator to better than 1e-5 relative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One discretized step with sensitivities.
#[derive(Debug, Clone)]
pub struct DiscreteDynamicsResult {
    pub x_next: DVector<f64>,
    /// ∂x_next/∂x (n×n).
    pub a_mat: DMatrix<f64>,
    /// ∂x_next/∂u (n×m).
    pub b_mat: DMatrix<f64>,
}

fn check_finite(dx: &DVector<f64>) -> Result<()> {
    for (k, v) in dx.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteDerivative { component: k });
        }
    }
    Ok(())
}

/// Classical 4th-order Runge–Kutta step with the input held constant.
pub fn rk4_step<F>(f: &F, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    debug_assert!(h > 0.0);
    let k1 = f(x, u)?;
    check_finite(&k1)?;
    let k2 = f(&(x + &k1 * (h / 2.0)), u)?;
    check_finite(&k2)?;
    let k3 = f(&(x + &k2 * (h / 2.0)), u)?;
    check_finite(&k3)?;
    let k4 = f(&(x + &k3 * h), u)?;
    check_finite(&k4)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates over `substeps` chained RK4 steps of size `h / substeps`.
pub fn rk4_integrate<F>(
    f: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    substeps: usize,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    debug_assert!(substeps >= 1);
    let dt = h / substeps as f64;
    let mut state = x.clone();
    for _ in 0..substeps {
        state = rk4_step(f, &state, u, dt)?;
    }
    Ok(state)
}

/// One RK4 step with exact sensitivities propagated through the stage
/// evaluations (variational RK4). `jac` returns (∂f/∂x, ∂f/∂u) at a point;
/// the returned A, B are the exact derivatives of the discrete map, free of
/// finite-difference noise.
pub fn rk4_step_variational<F, J>(
    f: &F,
    jac: &J,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DiscreteDynamicsResult>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>, &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>,
{
    let n = x.len();
    let eye = DMatrix::<f64>::identity(n, n);

    let k1 = f(x, u)?;
    check_finite(&k1)?;
    let (fx1, fu1) = jac(x, u)?;
    let x2 = x + &k1 * (h / 2.0);
    let k2 = f(&x2, u)?;
    check_finite(&k2)?;
    let (fx2, fu2) = jac(&x2, u)?;
    let x3 = x + &k2 * (h / 2.0);
    let k3 = f(&x3, u)?;
    check_finite(&k3)?;
    let (fx3, fu3) = jac(&x3, u)?;
    let x4 = x + &k3 * h;
    let k4 = f(&x4, u)?;
    check_finite(&k4)?;
    let (fx4, fu4) = jac(&x4, u)?;

    // Stage sensitivities dk_i/dx and dk_i/du.
    let j1 = fx1.clone();
    let j2 = &fx2 * (&eye + &j1 * (h / 2.0));
    let j3 = &fx3 * (&eye + &j2 * (h / 2.0));
    let j4 = &fx4 * (&eye + &j3 * h);
    let p1 = fu1;
    let p2 = &fx2 * &p1 * (h / 2.0) + fu2;
    let p3 = &fx3 * &p2 * (h / 2.0) + fu3;
    let p4 = &fx4 * &p3 * h + fu4;

    Ok(DiscreteDynamicsResult {
        x_next: x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0),
        a_mat: eye + (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0),
        b_mat: (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0),
    })
}

/// Chains [`rk4_step_variational`] over `substeps`, composing the
/// sensitivities by the chain rule.
pub fn discretize_variational<F, J>(
    f: &F,
    jac: &J,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    substeps: usize,
) -> Result<DiscreteDynamicsResult>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>, &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>,
{
    debug_assert!(substeps >= 1);
    let dt = h / substeps as f64;
    let mut result = rk4_step_variational(f, jac, x, u, dt)?;
    for _ in 1..substeps {
        let next = rk4_step_variational(f, jac, &result.x_next, u, dt)?;
        result = DiscreteDynamicsResult {
            x_next: next.x_next,
            b_mat: &next.a_mat * &result.b_mat + &next.b_mat,
            a_mat: next.a_mat * result.a_mat,
        };
    }
    Ok(result)
}

/// Discrete map over one shooting interval plus forward-difference
/// sensitivities with respect to the initial state and the input.
pub fn discretize_with_sensitivities<F>(
    f: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    substeps: usize,
) -> Result<DiscreteDynamicsResult>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let m = u.len();
    let x_next = rk4_integrate(f, x, u, h, substeps)?;
    let sqrt_eps = f64::EPSILON.sqrt();

    let mut a_mat = DMatrix::zeros(n, n);
    for j in 0..n {
        let delta = sqrt_eps * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += delta;
        let col = (rk4_integrate(f, &xp, u, h, substeps)? - &x_next) / delta;
        a_mat.set_column(j, &col);
    }

    let mut b_mat = DMatrix::zeros(n, m);
    for j in 0..m {
        let delta = sqrt_eps * u[j].abs().max(1.0);
        let mut up = u.clone();
        up[j] += delta;
        let col = (rk4_integrate(f, x, &up, h, substeps)? - &x_next) / delta;
        b_mat.set_column(j, &col);
    }

    Ok(DiscreteDynamicsResult { x_next, a_mat, b_mat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn constant_state_stays_put() {
        let f = |x: &DVector<f64>, _u: &DVector<f64>| Ok(DVector::zeros(x.len()));
        let x = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let out = rk4_step(&f, &x, &DVector::zeros(1), 0.25).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn exponential_decay_local_error_bound() {
        // ẋ = −x: one step against e^{−h}; the RK4 local defect is
        // h⁵/5!·|x| plus higher order, so h⁵/120 bounds it comfortably.
        let f = |x: &DVector<f64>, _u: &DVector<f64>| Ok(-x.clone());
        let h = 0.1;
        let out = rk4_step(&f, &vec1(1.0), &DVector::zeros(1), h).unwrap();
        let exact = (-h_f64(h)).exp();
        assert!((out[0] - exact).abs() <= h.powi(5) / 120.0);
        fn h_f64(h: f64) -> f64 {
            h
        }
    }

    #[test]
    fn fourth_order_global_convergence() {
        let f = |x: &DVector<f64>, _u: &DVector<f64>| Ok(-x.clone());
        let u = DVector::zeros(1);
        let global_error = |h: f64| {
            let steps = (1.0 / h).round() as usize;
            let mut x = vec1(1.0);
            for _ in 0..steps {
                x = rk4_step(&f, &x, &u, h).unwrap();
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let e1 = global_error(1e-2);
        let e2 = global_error(5e-3);
        let order = (e1 / e2).log2();
        assert!((3.8..=4.2).contains(&order), "observed order {order}");
        // Halving the step cuts the global error by roughly 16.
        assert!((e1 / e2 - 16.0).abs() < 2.0);
    }

    #[test]
    fn nonfinite_derivative_names_component() {
        let f = |_x: &DVector<f64>, _u: &DVector<f64>| {
            Ok(DVector::from_vec(vec![0.0, f64::NAN, 0.0]))
        };
        let err = rk4_step(&f, &DVector::zeros(3), &DVector::zeros(1), 0.1).unwrap_err();
        match err {
            Error::NonFiniteDerivative { component } => assert_eq!(component, 1),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn trivial_sensitivities() {
        // f ≡ 0 ⇒ A = I, B = 0.
        let f = |x: &DVector<f64>, _u: &DVector<f64>| Ok(DVector::zeros(x.len()));
        let r = discretize_with_sensitivities(&f, &DVector::zeros(2), &DVector::zeros(1), 0.1, 1)
            .unwrap();
        assert_relative_eq!((r.a_mat - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-9);
        assert_relative_eq!(r.b_mat.amax(), 0.0, epsilon = 1e-9);

        // ẋ = u ⇒ A = I, B = h·1 exactly for RK4 on a constant derivative.
        let f = |_x: &DVector<f64>, u: &DVector<f64>| Ok(u.clone());
        let r = discretize_with_sensitivities(&f, &vec1(0.3), &vec1(2.0), 0.05, 1).unwrap();
        assert_relative_eq!(r.a_mat[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.b_mat[(0, 0)], 0.05, max_relative = 1e-7);
    }

    #[test]
    fn linear_system_sensitivity_matches_matrix_exponential() {
        // Rotation ẋ = Mx with M = [[0, 1], [−1, 0]]: expm(Mh) is a plane
        // rotation by h. RK4's truncation differs from it at O(h⁵).
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let mc = m.clone();
        let f = move |x: &DVector<f64>, _u: &DVector<f64>| Ok(&mc * x);
        let h = 1e-2;
        let r = discretize_with_sensitivities(
            &f,
            &DVector::from_vec(vec![0.7, -0.4]),
            &DVector::zeros(1),
            h,
            1,
        )
        .unwrap();
        let expm = DMatrix::from_row_slice(2, 2, &[h.cos(), h.sin(), -h.sin(), h.cos()]);
        // RK4 truncation is O(h⁵); the forward-difference sensitivity noise
        // of ~sqrt(eps) dominates at this step size.
        assert!((r.a_mat.clone() - expm).amax() < h.powi(5).max(1e-7));
        // And A → I + hM at first order.
        let first_order = DMatrix::identity(2, 2) + m * h;
        assert!((r.a_mat - first_order).amax() < h * h);
    }

    #[test]
    fn linear_sensitivities_are_state_independent() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.3, 1.2, 0.4, -1.1]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, -2.0]);
        let (mc, bc) = (m.clone(), b.clone());
        let f = move |x: &DVector<f64>, u: &DVector<f64>| Ok(&mc * x + &bc * u);
        let r1 = discretize_with_sensitivities(
            &f,
            &DVector::from_vec(vec![0.1, 0.2]),
            &vec1(3.0),
            0.02,
            2,
        )
        .unwrap();
        let r2 = discretize_with_sensitivities(
            &f,
            &DVector::from_vec(vec![-5.0, 7.0]),
            &vec1(-11.0),
            0.02,
            2,
        )
        .unwrap();
        assert!((r1.a_mat - r2.a_mat).amax() < 1e-7);
        assert!((r1.b_mat - r2.b_mat).amax() < 1e-7);
    }

    #[test]
    fn substeps_compose_exactly() {
        let f = |x: &DVector<f64>, u: &DVector<f64>| Ok(-x * 0.7 + u * 0.1);
        let x = vec1(1.3);
        let u = vec1(0.4);
        let h = 0.08;
        let two = rk4_integrate(&f, &x, &u, h, 2).unwrap();
        let chained = rk4_step(&f, &rk4_step(&f, &x, &u, h / 2.0).unwrap(), &u, h / 2.0).unwrap();
        assert_eq!(two, chained);
    }

    #[test]
    fn variational_sensitivities_are_exact_on_linear_systems() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.3, 1.2, 0.4, -1.1]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, -2.0]);
        let (mc, bc) = (m.clone(), b.clone());
        let f = move |x: &DVector<f64>, u: &DVector<f64>| Ok(&mc * x + &bc * u);
        let (mc, bc) = (m.clone(), b.clone());
        let jac = move |_x: &DVector<f64>, _u: &DVector<f64>| Ok((mc.clone(), bc.clone()));
        let x = DVector::from_vec(vec![0.7, -0.2]);
        let u = vec1(1.3);
        let exact = discretize_variational(&f, &jac, &x, &u, 0.04, 2).unwrap();
        let fd = discretize_with_sensitivities(&f, &x, &u, 0.04, 2).unwrap();
        // Same discrete map, and the FD sensitivities agree to their noise
        // floor while the variational ones are exact.
        assert_eq!(exact.x_next, fd.x_next);
        assert!((exact.a_mat.clone() - &fd.a_mat).amax() < 1e-7);
        assert!((exact.b_mat.clone() - &fd.b_mat).amax() < 1e-7);

        // Against the closed-form expm of the rotation system.
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let rc = rot.clone();
        let f = move |x: &DVector<f64>, _u: &DVector<f64>| Ok(&rc * x);
        let rc = rot.clone();
        let jac = move |_x: &DVector<f64>, _u: &DVector<f64>| {
            Ok((rc.clone(), DMatrix::zeros(2, 1)))
        };
        let h = 1e-2;
        let r = rk4_step_variational(&f, &jac, &DVector::from_vec(vec![1.0, 0.0]), &vec1(0.0), h)
            .unwrap();
        let expm = DMatrix::from_row_slice(2, 2, &[h.cos(), h.sin(), -h.sin(), h.cos()]);
        assert!((r.a_mat - expm).amax() < h.powi(5));
    }

    #[test]
    fn variational_matches_fd_on_nonlinear_system() {
        let f = |x: &DVector<f64>, u: &DVector<f64>| {
            Ok(DVector::from_vec(vec![
                x[1],
                -2.0 * x[0].sin() - 0.3 * x[1] + u[0],
            ]))
        };
        let jac = |x: &DVector<f64>, _u: &DVector<f64>| {
            Ok((
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0 * x[0].cos(), -0.3]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            ))
        };
        let x = DVector::from_vec(vec![0.4, -0.2]);
        let u = vec1(0.7);
        let exact = discretize_variational(&f, &jac, &x, &u, 0.01, 4).unwrap();
        let fd = discretize_with_sensitivities(&f, &x, &u, 0.01, 4).unwrap();
        assert!((exact.a_mat - fd.a_mat).amax() < 1e-6);
        assert!((exact.b_mat - fd.b_mat).amax() < 1e-6);
    }

    #[test]
    fn forward_sensitivities_track_central_differences() {
        // The published accuracy contract: < 1e-5 relative against central
        // differences of the same discrete map.
        let f = |x: &DVector<f64>, u: &DVector<f64>| {
            Ok(DVector::from_vec(vec![
                x[1],
                -2.0 * x[0].sin() - 0.3 * x[1] + u[0],
            ]))
        };
        let x = DVector::from_vec(vec![0.4, -0.2]);
        let u = vec1(0.7);
        let h = 0.01;
        let r = discretize_with_sensitivities(&f, &x, &u, h, 4).unwrap();

        let mut a_cd = DMatrix::zeros(2, 2);
        for j in 0..2 {
            let d = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += d;
            xm[j] -= d;
            let col = (rk4_integrate(&f, &xp, &u, h, 4).unwrap()
                - rk4_integrate(&f, &xm, &u, h, 4).unwrap())
                / (2.0 * d);
            a_cd.set_column(j, &col);
        }
        let d = 1e-6;
        let b_cd = (rk4_integrate(&f, &x, &vec1(u[0] + d), h, 4).unwrap()
            - rk4_integrate(&f, &x, &vec1(u[0] - d), h, 4).unwrap())
            / (2.0 * d);
        assert!((r.a_mat - &a_cd).amax() / a_cd.amax() < 1e-5);
        assert!((r.b_mat.column(0) - b_cd).amax() < 1e-5);
    }
}

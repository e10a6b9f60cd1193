//! Structured solution of the LQ subproblem by backward Riccati recursion
//! and forward rollout, with a primal active-set treatment of input box
//! constraints.
//!
//! The subproblem in the step variables (δx, δu) is
//!
//! ```text
//! min  Σₖ ½δxₖᵀHxₖδxₖ + gxₖᵀδxₖ + ½δuₖᵀHuₖδuₖ + guₖᵀδuₖ  (+ terminal)
//! s.t. δx₀ = r₀,   δxₖ₊₁ = Aₖδxₖ + Bₖδuₖ + dₖ,   lo ≤ δu ≤ hi
//! ```
//!
//! Eliminating the dynamics leaves a strictly convex box-QP in δu (Hu ≻ 0).
//! The active-set loop keeps a bound-feasible iterate, steps toward the
//! minimizer of the equality-restricted problem up to the first blocking
//! bound, and drops working constraints whose multiplier turns non-positive
//! (a multiplier of exactly zero releases the bound). The objective is
//! non-increasing along every step, which rules out cycling; ties are
//! broken by the lowest stage index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stage data of the LQ subproblem.
#[derive(Debug, Clone)]
pub struct QpStage {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Affine continuity term.
    pub d: DVector<f64>,
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
    pub gx: DVector<f64>,
    pub gu: DVector<f64>,
}

/// Terminal-node cost data.
#[derive(Debug, Clone)]
pub struct QpTerminal {
    pub hx: DMatrix<f64>,
    pub gx: DVector<f64>,
}

impl QpTerminal {
    pub fn zero(n: usize) -> Self {
        Self {
            hx: DMatrix::zeros(n, n),
            gx: DVector::zeros(n),
        }
    }
}

/// Box bounds on δu, per stage and component.
#[derive(Debug, Clone)]
pub struct QpBounds {
    pub lower: Vec<DVector<f64>>,
    pub upper: Vec<DVector<f64>>,
}

/// Working-set state of one input component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundState {
    Free,
    AtLower,
    AtUpper,
    /// lower == upper: a pinned input, never released.
    Equality,
}

pub type ActiveSet = Vec<Vec<BoundState>>;

/// Solution of the LQ subproblem.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub dx: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    /// costates[k] belongs to the constraint producing δx_{k+1}.
    pub costates: Vec<DVector<f64>>,
    pub mu_lower: Vec<DVector<f64>>,
    pub mu_upper: Vec<DVector<f64>>,
    pub active: ActiveSet,
    pub objective: f64,
    pub regularized: bool,
    pub active_set_iterations: usize,
}

/// Backward-pass products for one stage with the working set fixed.
struct StageGain {
    free: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    /// Feedback gain for the free components (|free| × n).
    gain: DMatrix<f64>,
    /// Feedforward for the free components.
    ff: DVector<f64>,
}

fn bound_value(state: BoundState, lo: f64, hi: f64) -> f64 {
    match state {
        BoundState::AtLower | BoundState::Equality => lo,
        BoundState::AtUpper => hi,
        BoundState::Free => unreachable!(),
    }
}

/// One Riccati sweep with the given working set and fixed δu values.
/// Returns None when a stage Hessian fails to factor (caller regularizes).
fn riccati_sweep(
    stages: &[QpStage],
    terminal: &QpTerminal,
    active: &ActiveSet,
    fixed_values: &[DVector<f64>],
    reg: f64,
) -> Option<Vec<StageGain>> {
    let n = terminal.gx.len();
    let mut p_mat = terminal.hx.clone();
    let mut p_vec = terminal.gx.clone();
    if reg > 0.0 {
        for i in 0..n {
            p_mat[(i, i)] += reg;
        }
    }
    let mut gains: Vec<StageGain> = Vec::with_capacity(stages.len());

    for (k, stage) in stages.iter().enumerate().rev() {
        let m = stage.gu.len();
        let free: Vec<usize> = (0..m)
            .filter(|&i| active[k][i] == BoundState::Free)
            .collect();
        let fixed: Vec<(usize, f64)> = (0..m)
            .filter(|&i| active[k][i] != BoundState::Free)
            .map(|i| (i, fixed_values[k][i]))
            .collect();

        // Fold the pinned input components into the affine term.
        let mut d_eff = stage.d.clone();
        for &(i, v) in &fixed {
            d_eff += stage.b.column(i) * v;
        }

        let pd_plus_p = &p_mat * &d_eff + &p_vec;

        let (p_new, p_vec_new, gain, ff) = if free.is_empty() {
            let p_new = &stage.hx + stage.a.transpose() * &p_mat * &stage.a;
            let p_vec_new = &stage.gx + stage.a.transpose() * &pd_plus_p;
            (p_new, p_vec_new, DMatrix::zeros(0, n), DVector::zeros(0))
        } else {
            let nf = free.len();
            let b_free = DMatrix::from_fn(n, nf, |r, c| stage.b[(r, free[c])]);
            let mut hu_ff = DMatrix::from_fn(nf, nf, |r, c| stage.hu[(free[r], free[c])]);
            if reg > 0.0 {
                for i in 0..nf {
                    hu_ff[(i, i)] += reg;
                }
            }
            // gu of the free block, corrected for pinned components.
            let mut gu_f = DVector::from_fn(nf, |r, _| stage.gu[free[r]]);
            for &(i, v) in &fixed {
                for r in 0..nf {
                    gu_f[r] += stage.hu[(free[r], i)] * v;
                }
            }

            let s_uu = &hu_ff + b_free.transpose() * &p_mat * &b_free;
            let s_ux = b_free.transpose() * &p_mat * &stage.a;
            let s_u = gu_f + b_free.transpose() * &pd_plus_p;
            let chol = s_uu.clone().cholesky()?;
            let gain = -chol.solve(&s_ux);
            let ff = -chol.solve(&s_u);

            let mut p_new = &stage.hx + stage.a.transpose() * &p_mat * &stage.a
                + s_ux.transpose() * &gain;
            if reg > 0.0 {
                for i in 0..n {
                    p_new[(i, i)] += reg;
                }
            }
            let p_vec_new = &stage.gx + stage.a.transpose() * &pd_plus_p + s_ux.transpose() * &ff;
            (p_new, p_vec_new, gain, ff)
        };

        // Symmetrize against drift.
        p_mat = (&p_new + p_new.transpose()) * 0.5;
        p_vec = p_vec_new;
        if !p_mat.iter().all(|v| v.is_finite()) {
            return None;
        }
        gains.push(StageGain {
            free,
            fixed,
            gain,
            ff,
        });
    }
    gains.reverse();
    Some(gains)
}

/// Rolls the linearized dynamics forward under the given inputs.
fn rollout_states(stages: &[QpStage], r0: &DVector<f64>, du: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut dx = Vec::with_capacity(stages.len() + 1);
    dx.push(r0.clone());
    for (k, stage) in stages.iter().enumerate() {
        let next = &stage.a * &dx[k] + &stage.b * &du[k] + &stage.d;
        dx.push(next);
    }
    dx
}

/// Costates λ of the equality-constrained problem at a point (dx, du):
/// λ_N = Hx_N·δx_N + gx_N, λ_k = Hx_k·δx_k + gx_k + A_kᵀ·λ_{k+1}.
fn costates_at(
    stages: &[QpStage],
    terminal: &QpTerminal,
    dx: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let n_int = stages.len();
    let mut lambdas = vec![DVector::zeros(terminal.gx.len()); n_int];
    let mut lambda_next = &terminal.hx * &dx[n_int] + &terminal.gx;
    for k in (0..n_int).rev() {
        lambdas[k] = lambda_next.clone();
        if k > 0 {
            lambda_next =
                &stages[k].hx * &dx[k] + &stages[k].gx + stages[k].a.transpose() * &lambda_next;
        }
    }
    lambdas
}

fn qp_objective(
    stages: &[QpStage],
    terminal: &QpTerminal,
    dx: &[DVector<f64>],
    du: &[DVector<f64>],
) -> f64 {
    let mut obj = 0.0;
    for (k, stage) in stages.iter().enumerate() {
        obj += 0.5 * dx[k].dot(&(&stage.hx * &dx[k])) + stage.gx.dot(&dx[k]);
        obj += 0.5 * du[k].dot(&(&stage.hu * &du[k])) + stage.gu.dot(&du[k]);
    }
    let last = &dx[stages.len()];
    obj += 0.5 * last.dot(&(&terminal.hx * last)) + terminal.gx.dot(last);
    obj
}

fn solve_restricted(
    stages: &[QpStage],
    terminal: &QpTerminal,
    r0: &DVector<f64>,
    active: &ActiveSet,
    fixed_values: &[DVector<f64>],
    regularized: &mut bool,
) -> Result<Vec<DVector<f64>>> {
    let mut reg = 0.0;
    for _ in 0..16 {
        if let Some(gains) = riccati_sweep(stages, terminal, active, fixed_values, reg) {
            // Forward rollout through the gains.
            let mut du = Vec::with_capacity(stages.len());
            let mut dx = r0.clone();
            for (k, stage) in stages.iter().enumerate() {
                let g = &gains[k];
                let mut u = DVector::zeros(stage.gu.len());
                if !g.free.is_empty() {
                    let u_free = &g.gain * &dx + &g.ff;
                    for (c, &i) in g.free.iter().enumerate() {
                        u[i] = u_free[c];
                    }
                }
                for &(i, v) in &g.fixed {
                    u[i] = v;
                }
                dx = &stage.a * &dx + &stage.b * &u + &stage.d;
                du.push(u);
            }
            if reg > 0.0 {
                *regularized = true;
            }
            return Ok(du);
        }
        reg = if reg == 0.0 { 1e-8 } else { reg * 10.0 };
    }
    Err(Error::Dimension(
        "LQ subproblem not positive definite even after regularization".into(),
    ))
}

/// Solves the LQ subproblem. Without bounds this is a single Riccati sweep;
/// with bounds the primal active-set loop described in the module docs runs
/// on top of it. `warm_active` seeds the working set.
pub fn solve_qp_riccati(
    stages: &[QpStage],
    terminal: &QpTerminal,
    r0: &DVector<f64>,
    bounds: Option<&QpBounds>,
    warm_active: Option<&ActiveSet>,
) -> Result<QpSolution> {
    let n_int = stages.len();
    if n_int == 0 {
        return Err(Error::Dimension("QP needs at least one stage".into()));
    }
    let m_dims: Vec<usize> = stages.iter().map(|s| s.gu.len()).collect();
    let mut regularized = false;

    let Some(bounds) = bounds else {
        let active: ActiveSet = m_dims.iter().map(|&m| vec![BoundState::Free; m]).collect();
        let zeros: Vec<DVector<f64>> = m_dims.iter().map(|&m| DVector::zeros(m)).collect();
        let du = solve_restricted(stages, terminal, r0, &active, &zeros, &mut regularized)?;
        let dx = rollout_states(stages, r0, &du);
        let costates = costates_at(stages, terminal, &dx);
        let objective = qp_objective(stages, terminal, &dx, &du);
        return Ok(QpSolution {
            mu_lower: zeros.clone(),
            mu_upper: zeros,
            dx,
            du,
            costates,
            active,
            objective,
            regularized,
            active_set_iterations: 0,
        });
    };

    // Initial working set: components pinned by equal bounds, previously
    // active components from the warm start, plus anything whose feasible
    // interval excludes zero (the current iterate sits on that bound).
    let mut active: ActiveSet = Vec::with_capacity(n_int);
    for k in 0..n_int {
        let mut row = Vec::with_capacity(m_dims[k]);
        for i in 0..m_dims[k] {
            let (lo, hi) = (bounds.lower[k][i], bounds.upper[k][i]);
            if lo > hi {
                return Err(Error::Dimension("QP bounds must satisfy lower ≤ upper".into()));
            }
            let state = if lo == hi {
                BoundState::Equality
            } else if lo >= 0.0 {
                BoundState::AtLower
            } else if hi <= 0.0 {
                BoundState::AtUpper
            } else {
                match warm_active.map(|w| w[k][i]) {
                    Some(BoundState::AtLower) => BoundState::AtLower,
                    Some(BoundState::AtUpper) => BoundState::AtUpper,
                    _ => BoundState::Free,
                }
            };
            row.push(state);
        }
        active.push(row);
    }

    // Current bound-feasible iterate: every working component at its bound,
    // free components at zero (zero is feasible: the caller's trajectory
    // satisfies the bounds).
    let mut cur: Vec<DVector<f64>> = (0..n_int)
        .map(|k| {
            DVector::from_fn(m_dims[k], |i, _| match active[k][i] {
                BoundState::Free => 0.0,
                s => bound_value(s, bounds.lower[k][i], bounds.upper[k][i]),
            })
        })
        .collect();

    let max_iterations = 4 * m_dims.iter().sum::<usize>() + 16;
    let mut iterations = 0;

    loop {
        iterations += 1;
        let fixed_values: Vec<DVector<f64>> = (0..n_int)
            .map(|k| {
                DVector::from_fn(m_dims[k], |i, _| match active[k][i] {
                    BoundState::Free => 0.0,
                    s => bound_value(s, bounds.lower[k][i], bounds.upper[k][i]),
                })
            })
            .collect();
        let du_star =
            solve_restricted(stages, terminal, r0, &active, &fixed_values, &mut regularized)?;

        let step_norm = (0..n_int)
            .map(|k| (&du_star[k] - &cur[k]).amax())
            .fold(0.0f64, f64::max);
        let scale = (0..n_int)
            .map(|k| du_star[k].amax())
            .fold(1.0f64, f64::max);

        if step_norm <= 1e-13 * scale || iterations > max_iterations {
            // At the restricted minimizer: check multiplier signs.
            let dx = rollout_states(stages, r0, &cur);
            let costates = costates_at(stages, terminal, &dx);
            let mut worst: Option<(usize, usize, f64)> = None;
            for k in 0..n_int {
                let grad_u =
                    &stages[k].hu * &cur[k] + &stages[k].gu + stages[k].b.transpose() * &costates[k];
                for i in 0..m_dims[k] {
                    let mu = match active[k][i] {
                        BoundState::AtUpper => -grad_u[i],
                        BoundState::AtLower => grad_u[i],
                        _ => continue,
                    };
                    // Keep the bound inactive on an exactly-zero multiplier.
                    if mu <= 0.0 && worst.map_or(true, |(_, _, w)| mu < w) {
                        worst = Some((k, i, mu));
                    }
                }
            }
            if let Some((k, i, _)) = worst {
                if iterations <= max_iterations {
                    active[k][i] = BoundState::Free;
                    continue;
                }
            }

            // Dual feasible: assemble the solution.
            let mut mu_lower: Vec<DVector<f64>> =
                m_dims.iter().map(|&m| DVector::zeros(m)).collect();
            let mut mu_upper: Vec<DVector<f64>> =
                m_dims.iter().map(|&m| DVector::zeros(m)).collect();
            for k in 0..n_int {
                let grad_u =
                    &stages[k].hu * &cur[k] + &stages[k].gu + stages[k].b.transpose() * &costates[k];
                for i in 0..m_dims[k] {
                    match active[k][i] {
                        BoundState::AtUpper => mu_upper[k][i] = (-grad_u[i]).max(0.0),
                        BoundState::AtLower => mu_lower[k][i] = grad_u[i].max(0.0),
                        BoundState::Equality => {
                            // Equal bounds: load the signed multiplier on
                            // whichever side keeps both duals non-negative.
                            if grad_u[i] >= 0.0 {
                                mu_lower[k][i] = grad_u[i];
                            } else {
                                mu_upper[k][i] = -grad_u[i];
                            }
                        }
                        BoundState::Free => {}
                    }
                }
            }
            let objective = qp_objective(stages, terminal, &dx, &cur);
            return Ok(QpSolution {
                dx,
                du: cur,
                costates,
                mu_lower,
                mu_upper,
                active,
                objective,
                regularized,
                active_set_iterations: iterations,
            });
        }

        // Step toward the restricted minimizer up to the first blocking
        // bound; ties resolve to the lowest (stage, component).
        let mut alpha = 1.0f64;
        let mut blocking: Option<(usize, usize, BoundState)> = None;
        for k in 0..n_int {
            for i in 0..m_dims[k] {
                if active[k][i] != BoundState::Free {
                    continue;
                }
                let p = du_star[k][i] - cur[k][i];
                if p > 0.0 {
                    let room = bounds.upper[k][i] - cur[k][i];
                    let limit = (room / p).max(0.0);
                    if limit < alpha {
                        alpha = limit;
                        blocking = Some((k, i, BoundState::AtUpper));
                    }
                } else if p < 0.0 {
                    let room = bounds.lower[k][i] - cur[k][i];
                    let limit = (room / p).max(0.0);
                    if limit < alpha {
                        alpha = limit;
                        blocking = Some((k, i, BoundState::AtLower));
                    }
                }
            }
        }

        if blocking.is_none() {
            // Full step is feasible.
            cur = du_star;
        } else {
            for k in 0..n_int {
                let step = (&du_star[k] - &cur[k]) * alpha;
                cur[k] += step;
            }
            let (k, i, side) = blocking.unwrap();
            cur[k][i] = bound_value(side, bounds.lower[k][i], bounds.upper[k][i]);
            active[k][i] = side;
        }
    }
}

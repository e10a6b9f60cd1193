//! Optimal control problem transcription: direct multiple shooting with a
//! tracking cost on the model outputs and box constraints on the input.
//!
//! The continuous cost is discretized with a left-endpoint rectangle rule
//! over the shooting grid; there is no terminal cost or constraint. Stage
//! Hessians use the Gauss–Newton approximation `JᵀQJ`, exact for the
//! quadratic output-tracking cost whenever the output map is linear.

pub mod riccati;
pub mod sqp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LevitationModel;
use crate::odeint::{self, DiscreteDynamicsResult};

pub use riccati::{
    solve_qp_riccati, ActiveSet, BoundState, QpBounds, QpSolution, QpStage, QpTerminal,
};
pub use sqp::{SolveMode, SolveStats, SqpSettings, SqpSolver, TraceRow};

/// Continuous-time dynamics ẋ = f(x, u).
pub trait ContinuousDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;

    /// Analytic (∂f/∂x, ∂f/∂u) when the model has them. With Jacobians the
    /// transcription propagates exact variational sensitivities; without,
    /// it falls back to finite differences on the integrator.
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        None
    }
}

/// Discrete-time dynamics over one shooting interval.
pub trait DiscreteDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn step_with_sensitivities(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DiscreteDynamicsResult>;
}

/// Output map y = h(x) with Jacobian.
pub trait OutputMap: Send + Sync {
    fn output_dim(&self) -> usize;
    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn output_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl ContinuousDynamics for LevitationModel {
    fn state_dim(&self) -> usize {
        LevitationModel::state_dim(self)
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        LevitationModel::derivative(self, x, u[0])
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        Some(
            self.derivative_jacobians(x, u[0])
                .map(|(fx, fu)| (fx, DMatrix::from_column_slice(fu.len(), 1, fu.as_slice()))),
        )
    }
}

impl OutputMap for LevitationModel {
    fn output_dim(&self) -> usize {
        LevitationModel::output_dim(self)
    }

    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        LevitationModel::output(self, x)
    }

    fn output_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        LevitationModel::output_jacobian(self, x)
    }
}

/// Explicit RK4 transcription of continuous dynamics, with forward-difference
/// sensitivities.
pub struct RkTranscription<D: ContinuousDynamics> {
    dynamics: D,
    step_len: f64,
    substeps: usize,
}

impl<D: ContinuousDynamics> RkTranscription<D> {
    pub fn new(dynamics: D, step_len: f64, substeps: usize) -> Self {
        assert!(step_len > 0.0 && substeps >= 1);
        Self {
            dynamics,
            step_len,
            substeps,
        }
    }
}

impl<D: ContinuousDynamics> DiscreteDynamics for RkTranscription<D> {
    fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let f = |x: &DVector<f64>, u: &DVector<f64>| self.dynamics.derivative(x, u);
        odeint::rk4_integrate(&f, x, u, self.step_len, self.substeps)
    }

    fn step_with_sensitivities(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DiscreteDynamicsResult> {
        let f = |x: &DVector<f64>, u: &DVector<f64>| self.dynamics.derivative(x, u);
        if self.dynamics.jacobians(x, u).is_some() {
            let jac = |x: &DVector<f64>, u: &DVector<f64>| {
                self.dynamics.jacobians(x, u).expect("jacobians vanished")
            };
            odeint::discretize_variational(&f, &jac, x, u, self.step_len, self.substeps)
        } else {
            odeint::discretize_with_sensitivities(&f, x, u, self.step_len, self.substeps)
        }
    }
}

/// Exact linear discrete dynamics x⁺ = A·x + B·u. Handy for LQ references
/// and solver verification.
pub struct LinearDiscreteDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl DiscreteDynamics for LinearDiscreteDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.a * x + &self.b * u)
    }

    fn step_with_sensitivities(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DiscreteDynamicsResult> {
        Ok(DiscreteDynamicsResult {
            x_next: self.step(x, u)?,
            a_mat: self.a.clone(),
            b_mat: self.b.clone(),
        })
    }
}

/// Affine output map y = y0 + C·x.
pub struct LinearOutputMap {
    pub c: DMatrix<f64>,
    pub y0: DVector<f64>,
}

impl OutputMap for LinearOutputMap {
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.y0 + &self.c * x)
    }

    fn output_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.c.clone())
    }
}

/// The discretized OCP over one prediction horizon.
pub struct OcpProblem {
    /// State dimension.
    pub n: usize,
    /// Input dimension.
    pub m: usize,
    /// Number of shooting intervals N.
    pub n_intervals: usize,
    /// Interval length T/N [s].
    pub step_len: f64,
    /// Diagonal output weights.
    pub q_weights: DVector<f64>,
    /// Scalar input weight, applied to every input component.
    pub r_weight: f64,
    /// Output reference.
    pub y_ref: DVector<f64>,
    /// Input reference.
    pub u_ref: DVector<f64>,
    /// Input box, component-wise, identical over the horizon.
    pub u_lower: DVector<f64>,
    pub u_upper: DVector<f64>,
    /// Initial state of the current horizon (the measured state).
    pub x0: DVector<f64>,
    pub dynamics: Box<dyn DiscreteDynamics>,
    pub output: Box<dyn OutputMap>,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.n_intervals < 1 {
            return Err(Error::Dimension("need at least one shooting interval".into()));
        }
        if self.step_len <= 0.0 {
            return Err(Error::Dimension("step length must be positive".into()));
        }
        if self.dynamics.state_dim() != self.n || self.dynamics.input_dim() != self.m {
            return Err(Error::Dimension("dynamics dimensions disagree with problem".into()));
        }
        if self.output.output_dim() != self.q_weights.len()
            || self.y_ref.len() != self.q_weights.len()
        {
            return Err(Error::Dimension("output dimensions disagree".into()));
        }
        if self.q_weights.iter().any(|&q| q < 0.0) || self.q_weights.iter().all(|&q| q == 0.0) {
            return Err(Error::Dimension(
                "output weights must be non-negative with at least one positive".into(),
            ));
        }
        if self.r_weight <= 0.0 {
            return Err(Error::Dimension("input weight must be positive".into()));
        }
        if self.u_lower.len() != self.m
            || self.u_upper.len() != self.m
            || self.u_ref.len() != self.m
        {
            return Err(Error::Dimension("input vectors must have length m".into()));
        }
        if self.u_lower.iter().zip(self.u_upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::Dimension("input bounds must satisfy lower ≤ upper".into()));
        }
        if self.x0.len() != self.n {
            return Err(Error::Dimension("x0 must have length n".into()));
        }
        Ok(())
    }
}

/// Shooting iterate: N+1 node states and N interval inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingTrajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl ShootingTrajectory {
    pub fn zeros(n: usize, m: usize, n_intervals: usize) -> Self {
        Self {
            states: vec![DVector::zeros(n); n_intervals + 1],
            inputs: vec![DVector::zeros(m); n_intervals],
        }
    }

    /// Constant-input trajectory at the given input reference.
    pub fn constant(n: usize, u: &DVector<f64>, n_intervals: usize) -> Self {
        Self {
            states: vec![DVector::zeros(n); n_intervals + 1],
            inputs: vec![u.clone(); n_intervals],
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.inputs.len()
    }

    pub fn check_dims(&self, problem: &OcpProblem) -> Result<()> {
        if self.states.len() != problem.n_intervals + 1
            || self.inputs.len() != problem.n_intervals
            || self.states.iter().any(|x| x.len() != problem.n)
            || self.inputs.iter().any(|u| u.len() != problem.m)
        {
            return Err(Error::Dimension(format!(
                "trajectory ({} states, {} inputs) does not fit problem (N = {}, n = {}, m = {})",
                self.states.len(),
                self.inputs.len(),
                problem.n_intervals,
                problem.n,
                problem.m
            )));
        }
        Ok(())
    }

    /// Receding-horizon shift: drop the first interval, duplicate the last
    /// node and input.
    pub fn shift(&mut self) {
        let n_nodes = self.states.len();
        if n_nodes > 1 {
            self.states.rotate_left(1);
            self.states[n_nodes - 1] = self.states[n_nodes - 2].clone();
        }
        let n_inputs = self.inputs.len();
        if n_inputs > 1 {
            self.inputs.rotate_left(1);
            self.inputs[n_inputs - 1] = self.inputs[n_inputs - 2].clone();
        }
    }
}

/// Per-interval linearization data.
#[derive(Debug, Clone)]
pub struct StageLin {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Continuity defect F(x_k, u_k) − x_{k+1}.
    pub defect: DVector<f64>,
    /// Gauss–Newton state Hessian 2·h·JᵀQJ.
    pub hx: DMatrix<f64>,
    /// Input Hessian 2·h·R·I.
    pub hu: DMatrix<f64>,
    /// Cost gradient w.r.t. x_k.
    pub gx: DVector<f64>,
    /// Cost gradient w.r.t. u_k.
    pub gu: DVector<f64>,
}

/// Full-horizon linearization.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub stages: Vec<StageLin>,
    /// Terminal node cost data (zero: no terminal cost).
    pub terminal_hx: DMatrix<f64>,
    pub terminal_gx: DVector<f64>,
    pub max_defect: f64,
}

/// Rectangle-rule cost of a trajectory.
pub fn evaluate_cost(problem: &OcpProblem, traj: &ShootingTrajectory) -> Result<f64> {
    traj.check_dims(problem)?;
    let mut cost = 0.0;
    for k in 0..problem.n_intervals {
        let y = problem.output.output(&traj.states[k])?;
        let ry = &y - &problem.y_ref;
        let ru = &traj.inputs[k] - &problem.u_ref;
        let mut stage = 0.0;
        for j in 0..ry.len() {
            stage += problem.q_weights[j] * ry[j] * ry[j];
        }
        stage += problem.r_weight * ru.dot(&ru);
        cost += problem.step_len * stage;
    }
    Ok(cost)
}

/// Linearizes dynamics and cost around a trajectory.
pub fn linearize(problem: &OcpProblem, traj: &ShootingTrajectory) -> Result<Linearization> {
    traj.check_dims(problem)?;
    let h2 = 2.0 * problem.step_len;
    let mut stages = Vec::with_capacity(problem.n_intervals);
    let mut max_defect = 0.0f64;
    for k in 0..problem.n_intervals {
        let sens = problem
            .dynamics
            .step_with_sensitivities(&traj.states[k], &traj.inputs[k])
            .map_err(|e| Error::Stage {
                stage: k,
                source: Box::new(e),
            })?;
        let defect = &sens.x_next - &traj.states[k + 1];
        max_defect = max_defect.max(defect.amax());

        let y = problem.output.output(&traj.states[k])?;
        let jac = problem.output.output_jacobian(&traj.states[k])?;
        let ry = &y - &problem.y_ref;
        // Weighted residual Q·(y − y_ref) and JᵀQJ with diagonal Q.
        let wr = DVector::from_fn(ry.len(), |i, _| problem.q_weights[i] * ry[i]);
        let wj = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, j| {
            problem.q_weights[i] * jac[(i, j)]
        });
        let gx = jac.transpose() * wr * h2;
        let hx = jac.transpose() * wj * h2;
        let ru = &traj.inputs[k] - &problem.u_ref;
        let gu = ru * (h2 * problem.r_weight);
        let hu = DMatrix::identity(problem.m, problem.m) * (h2 * problem.r_weight);

        stages.push(StageLin {
            a: sens.a_mat,
            b: sens.b_mat,
            defect,
            hx,
            hu,
            gx,
            gu,
        });
    }
    Ok(Linearization {
        stages,
        terminal_hx: DMatrix::zeros(problem.n, problem.n),
        terminal_gx: DVector::zeros(problem.n),
        max_defect,
    })
}

/// KKT multiplier estimates: continuity costates and input-bound duals.
#[derive(Debug, Clone)]
pub struct KktMultipliers {
    /// costates[k] is attached to the constraint x_{k+1} = F(x_k, u_k).
    pub costates: Vec<DVector<f64>>,
    pub mu_lower: Vec<DVector<f64>>,
    pub mu_upper: Vec<DVector<f64>>,
}

impl KktMultipliers {
    pub fn zeros(n: usize, m: usize, n_intervals: usize) -> Self {
        Self {
            costates: vec![DVector::zeros(n); n_intervals],
            mu_lower: vec![DVector::zeros(m); n_intervals],
            mu_upper: vec![DVector::zeros(m); n_intervals],
        }
    }
}

/// ∞-norm of the stationarity, feasibility and complementarity residuals.
/// Zero exactly at a KKT point of the discretized problem.
pub fn kkt_residual(
    problem: &OcpProblem,
    traj: &ShootingTrajectory,
    multipliers: &KktMultipliers,
) -> Result<f64> {
    let lin = linearize(problem, traj)?;
    Ok(kkt_residual_from_lin(problem, traj, &lin, multipliers))
}

pub(crate) fn kkt_residual_from_lin(
    problem: &OcpProblem,
    traj: &ShootingTrajectory,
    lin: &Linearization,
    mult: &KktMultipliers,
) -> f64 {
    let n_int = problem.n_intervals;
    let mut res = 0.0f64;

    // Stationarity w.r.t. interior node states: gx_k + A_kᵀλ_{k+1} − λ_k.
    for k in 1..n_int {
        let stat =
            &lin.stages[k].gx + lin.stages[k].a.transpose() * &mult.costates[k] - &mult.costates[k - 1];
        res = res.max(stat.amax());
    }
    // Terminal node: no cost there, so the last costate must vanish.
    if n_int >= 1 {
        let stat = &lin.terminal_gx - &mult.costates[n_int - 1];
        res = res.max(stat.amax());
    }
    // Stationarity w.r.t. inputs, including bound duals.
    for k in 0..n_int {
        let stat = &lin.stages[k].gu
            + lin.stages[k].b.transpose() * &mult.costates[k]
            + &mult.mu_upper[k]
            - &mult.mu_lower[k];
        res = res.max(stat.amax());
    }
    // Primal feasibility: continuity defects, initial condition, bounds.
    for stage in &lin.stages {
        res = res.max(stage.defect.amax());
    }
    res = res.max((&problem.x0 - &traj.states[0]).amax());
    for k in 0..n_int {
        for i in 0..problem.m {
            let u = traj.inputs[k][i];
            res = res.max((u - problem.u_upper[i]).max(0.0));
            res = res.max((problem.u_lower[i] - u).max(0.0));
            // Dual feasibility and complementary slackness.
            res = res.max((-mult.mu_upper[k][i]).max(0.0));
            res = res.max((-mult.mu_lower[k][i]).max(0.0));
            res = res.max((mult.mu_upper[k][i] * (problem.u_upper[i] - u)).abs());
            res = res.max((mult.mu_lower[k][i] * (u - problem.u_lower[i])).abs());
        }
    }
    res
}

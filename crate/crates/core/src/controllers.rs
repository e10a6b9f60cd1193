//! Receding-horizon levitation controllers.
//!
//! Three configurations are provided out of the box: the single-mass
//! baseline C1M (50 ms horizon), the two-mass C2M (50 ms) and the
//! long-horizon two-mass C2ML (500 ms), all sampled at 1 ms. Each instance
//! owns its warm start and must be driven sequentially; independent
//! instances can run in parallel.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{
    ControllerState, Equilibrium, LevitationModel, MagnetModel, MechanicalParams, ModelKind,
};
use crate::ocp::{
    OcpProblem, RkTranscription, ShootingTrajectory, SolveMode, SolveStats, SqpSettings, SqpSolver,
};

/// One controller configuration (one row of the comparison study).
///
/// Output and input weights apply to the SI tracking errors and the raw
/// voltage deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub name: String,
    pub model: ModelKind,
    /// Prediction horizon T [s].
    pub horizon: f64,
    /// Discretization intervals N.
    pub n_intervals: usize,
    /// Diagonal output weights: 5 entries for the two-mass model
    /// (s, Δz2, z̈1, z̈2, I), 3 for the single-mass (s, z̈1, I).
    pub q_weights: Vec<f64>,
    pub r_weight: f64,
    /// Sampling time δ [s].
    pub sampling_time: f64,
    pub mode: SolveMode,
}

impl ControllerConfig {
    /// Single-mass baseline: 50 ms horizon, 50 intervals, weight subset
    /// (q1, q3, q5) of the default comparison weights.
    pub fn c1m() -> Self {
        Self {
            name: "C1M".into(),
            model: ModelKind::SingleMass,
            horizon: 0.050,
            n_intervals: 50,
            q_weights: vec![1e2, 1.0, 1e5],
            r_weight: 1.0,
            sampling_time: 1e-3,
            mode: SolveMode::Converge,
        }
    }

    /// Two-mass controller, 50 ms horizon, 50 intervals.
    pub fn c2m() -> Self {
        Self {
            name: "C2M".into(),
            model: ModelKind::TwoMass,
            horizon: 0.050,
            n_intervals: 50,
            q_weights: vec![1e2, 1.0, 1.0, 1.0, 1e5],
            r_weight: 1.0,
            sampling_time: 1e-3,
            mode: SolveMode::Converge,
        }
    }

    /// Long-horizon two-mass controller, 500 ms horizon, 500 intervals.
    pub fn c2ml() -> Self {
        Self {
            name: "C2ML".into(),
            model: ModelKind::TwoMass,
            horizon: 0.500,
            n_intervals: 500,
            q_weights: vec![1e2, 1.0, 1.0, 1.0, 1e5],
            r_weight: 1.0,
            sampling_time: 1e-3,
            mode: SolveMode::Converge,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "C1M" => Some(Self::c1m()),
            "C2M" => Some(Self::c2m()),
            "C2ML" => Some(Self::c2ml()),
            _ => None,
        }
    }

    pub fn step_len(&self) -> f64 {
        self.horizon / self.n_intervals as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || self.n_intervals == 0 || self.sampling_time <= 0.0 {
            return Err(Error::ControllerConfig(format!(
                "{}: horizon, intervals and sampling time must be positive",
                self.name
            )));
        }
        // The shooting grid matches the sampling grid: T/N = δ.
        let step = self.step_len();
        if (step - self.sampling_time).abs() > 1e-12 * self.sampling_time.max(step) {
            return Err(Error::ControllerConfig(format!(
                "{}: horizon/intervals = {step} s must equal the sampling time {} s",
                self.name, self.sampling_time
            )));
        }
        let expected = self.model.state_dim();
        if self.q_weights.len() != expected {
            return Err(Error::ControllerConfig(format!(
                "{}: {} output weights supplied, model needs {expected}",
                self.name,
                self.q_weights.len()
            )));
        }
        if self.q_weights.iter().any(|&q| q <= 0.0) {
            return Err(Error::ControllerConfig(format!(
                "{}: output weight matrix must be positive definite",
                self.name
            )));
        }
        if self.r_weight <= 0.0 {
            return Err(Error::ControllerConfig(format!(
                "{}: input weight must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

/// A built controller: problem, solver and warm-start carrier.
pub struct ControllerInstance {
    pub config: ControllerConfig,
    model: LevitationModel,
    solver: SqpSolver,
    warm_start: ShootingTrajectory,
    pub last_stats: SolveStats,
    u_max: f64,
}

/// Builds the OCP for a configuration around the given equilibrium.
pub fn build_controller(
    cfg: &ControllerConfig,
    eq: &Equilibrium,
    mech: &MechanicalParams,
    magnet: &MagnetModel,
) -> Result<ControllerInstance> {
    cfg.validate()?;
    let model = LevitationModel::new(cfg.model, *mech, magnet.clone(), *eq)?;
    let n = model.state_dim();
    let u_max = magnet.params().u_max;

    let problem = OcpProblem {
        n,
        m: 1,
        n_intervals: cfg.n_intervals,
        step_len: cfg.step_len(),
        q_weights: DVector::from_vec(cfg.q_weights.clone()),
        r_weight: cfg.r_weight,
        y_ref: model.reference_output(),
        u_ref: DVector::zeros(1),
        u_lower: DVector::from_vec(vec![-u_max]),
        u_upper: DVector::from_vec(vec![u_max]),
        x0: DVector::zeros(n),
        dynamics: Box::new(RkTranscription::new(model.clone(), cfg.step_len(), 1)),
        output: Box::new(model.clone()),
    };
    let settings = SqpSettings {
        mode: cfg.mode,
        ..Default::default()
    };
    let solver = SqpSolver::new(problem, settings)?;
    let warm_start = ShootingTrajectory::zeros(n, 1, cfg.n_intervals);
    Ok(ControllerInstance {
        config: cfg.clone(),
        model,
        solver,
        warm_start,
        last_stats: SolveStats::default(),
        u_max,
    })
}

impl ControllerInstance {
    pub fn model(&self) -> &LevitationModel {
        &self.model
    }

    pub fn warm_start(&self) -> &ShootingTrajectory {
        &self.warm_start
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// One receding-horizon step: sets the measured state as the initial
    /// condition, solves from the warm start, applies the horizon shift and
    /// returns the first optimal input (voltage deviation, clamped to the
    /// admissible set). A solver that hits its iteration limit still yields
    /// its best first input, flagged through `stats.converged`.
    pub fn control_step(&mut self, meas: &ControllerState) -> Result<(f64, SolveStats)> {
        if !meas.is_finite() {
            return Err(Error::NonFiniteMeasurement);
        }
        let s = self.model.magnet().params().s_nom + meas.ds;
        if s <= 0.0 {
            return Err(Error::NonPositiveAirGap { gap: s });
        }
        let x0 = self.model.state_vector(meas);
        let (traj, stats) = self.solver.solve(&x0, &self.warm_start)?;
        let u = traj.inputs[0][0].clamp(-self.u_max, self.u_max);
        self.warm_start = traj;
        self.warm_start.shift();
        self.last_stats = stats;
        Ok((u, stats))
    }

    /// Resets the warm start to the all-zero trajectory.
    pub fn reset(&mut self) {
        let n = self.model.state_dim();
        self.warm_start = ShootingTrajectory::zeros(n, 1, self.config.n_intervals);
    }
}

/// Receding-horizon warm-start shift (also available as
/// [`ShootingTrajectory::shift`]).
pub fn shift_warm_start(traj: &mut ShootingTrajectory) {
    traj.shift();
}

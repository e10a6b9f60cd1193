//! Closed-loop simulation of one levitation unit riding the guideway.
//!
//! The plant integrates the two-mass mechatronic model at a fine substep
//! (position carried as an extra state, so the guideway enters the RK4
//! stages continuously) while the controller runs under zero-order hold at
//! its sampling time. Solve wall time is recorded but never delays the
//! loop; the simulation runs in logical time.

use nalgebra::DVector;

use crate::controllers::{build_controller, ControllerConfig};
use crate::error::{Error, Result};
use crate::guideway::GuidewayProfile;
use crate::model::{
    solve_equilibrium, two_mass_accelerations, ControllerState, MagnetModel, MechanicalParams,
    ModelKind, PlantState,
};
use crate::odeint::rk4_step;

/// How the plant starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Force balance at the nominal gap over the local guideway height.
    Equilibrium,
    /// Deviation from equilibrium.
    Deviation(ControllerState),
    /// Absolute plant state.
    Absolute(PlantState),
}

/// Reference frame of the measured car-body deviation Δz2.
///
/// `Guideway` subtracts the instantaneous deflection under the vehicle, so
/// the reference rides the rail; `Inertial` measures against the fixed
/// equilibrium altitude, which reads Δz2 as a true car-body displacement —
/// the quantity the comfort weights are meant to see. A single levitation
/// unit measuring against the local rail would drag the car body onto every
/// girder sag, which is why `Inertial` is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CarBodyFrame {
    Guideway,
    #[default]
    Inertial,
}

/// One closed-loop run.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Vehicle speed [m/s].
    pub speed: f64,
    /// Run duration [s].
    pub duration: f64,
    pub mech: MechanicalParams,
    pub magnet: MagnetModel,
    pub guideway: GuidewayProfile,
    pub controller: ControllerConfig,
    /// Plant integration step [s]; must divide the sampling time exactly.
    pub plant_step: f64,
    pub initial: InitialCondition,
    pub car_body_frame: CarBodyFrame,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.mech.validate()?;
        self.controller.validate()?;
        if self.duration <= 0.0 {
            return Err(Error::Scenario("duration must be positive".into()));
        }
        if self.speed < 0.0 {
            return Err(Error::Scenario("speed must be non-negative".into()));
        }
        if self.plant_step <= 0.0 {
            return Err(Error::Scenario("plant step must be positive".into()));
        }
        let delta = self.controller.sampling_time;
        let n_sub = (delta / self.plant_step).round();
        if n_sub < 1.0 || (n_sub * self.plant_step - delta).abs() > 1e-12 * delta {
            return Err(Error::Scenario(format!(
                "plant step {} s must divide the sampling time {delta} s exactly",
                self.plant_step
            )));
        }
        Ok(())
    }

    pub fn substeps_per_sample(&self) -> usize {
        (self.controller.sampling_time / self.plant_step).round() as usize
    }

    /// Same scenario with a different controller, for fair comparisons over
    /// an identical guideway.
    pub fn with_controller(&self, controller: ControllerConfig) -> Self {
        Self {
            controller,
            ..self.clone()
        }
    }
}

/// Per-sample solver statistics kept in the log.
#[derive(Debug, Clone, Copy)]
pub struct SolveSample {
    pub sqp_iterations: usize,
    pub kkt: f64,
    /// Wall time of the solve [s].
    pub solve_time: f64,
    pub converged: bool,
}

/// Why a run ended early.
#[derive(Debug, Clone, PartialEq)]
pub struct LevitationFailure {
    pub time: f64,
    pub gap: f64,
    pub reason: String,
}

/// Complete record of one run, sampled at the plant rate.
#[derive(Debug, Clone)]
pub struct RideLog {
    pub plant_step: f64,
    pub sampling_time: f64,
    pub s_nom: f64,
    pub i_nom: f64,
    pub u_nom: f64,
    pub controller_name: String,
    pub time: Vec<f64>,
    /// Air gap s [m].
    pub gap: Vec<f64>,
    /// Δs = s − s_nom [m].
    pub ds: Vec<f64>,
    /// Absolute car-body position z2 [m].
    pub z2: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// z̈1 [m/s²].
    pub a1: Vec<f64>,
    /// z̈2 [m/s²].
    pub a2: Vec<f64>,
    /// Current I [A].
    pub current: Vec<f64>,
    /// Applied absolute voltage U [V].
    pub voltage: Vec<f64>,
    /// Voltage deviation u = U − U_nom [V].
    pub u_dev: Vec<f64>,
    /// Guideway deflection under the magnet [m].
    pub dgw: Vec<f64>,
    /// One entry per controller sample.
    pub solve: Vec<SolveSample>,
    pub failure: Option<LevitationFailure>,
}

impl RideLog {
    fn with_capacity(rows: usize, samples: usize) -> Self {
        Self {
            plant_step: 0.0,
            sampling_time: 0.0,
            s_nom: 0.0,
            i_nom: 0.0,
            u_nom: 0.0,
            controller_name: String::new(),
            time: Vec::with_capacity(rows),
            gap: Vec::with_capacity(rows),
            ds: Vec::with_capacity(rows),
            z2: Vec::with_capacity(rows),
            v1: Vec::with_capacity(rows),
            v2: Vec::with_capacity(rows),
            a1: Vec::with_capacity(rows),
            a2: Vec::with_capacity(rows),
            current: Vec::with_capacity(rows),
            voltage: Vec::with_capacity(rows),
            u_dev: Vec::with_capacity(rows),
            dgw: Vec::with_capacity(rows),
            solve: Vec::with_capacity(samples),
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Number of plant rows per controller sample.
    pub fn substeps_per_sample(&self) -> usize {
        (self.sampling_time / self.plant_step).round() as usize
    }

    pub fn mean_solve_time(&self) -> f64 {
        if self.solve.is_empty() {
            return 0.0;
        }
        self.solve.iter().map(|s| s.solve_time).sum::<f64>() / self.solve.len() as f64
    }

    pub fn mean_sqp_iterations(&self) -> f64 {
        if self.solve.is_empty() {
            return 0.0;
        }
        self.solve.iter().map(|s| s.sqp_iterations as f64).sum::<f64>() / self.solve.len() as f64
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.solve.is_empty() {
            return 1.0;
        }
        self.solve.iter().filter(|s| s.converged).count() as f64 / self.solve.len() as f64
    }
}

/// Plant state layout: [z1, z2, v1, v2, I, position].
fn plant_derivative(
    x: &DVector<f64>,
    voltage: f64,
    speed: f64,
    mech: &MechanicalParams,
    magnet: &MagnetModel,
    profile: &GuidewayProfile,
) -> Result<DVector<f64>> {
    let (z1, z2, v1, v2, current, pos) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let dgw = profile.deflection_at(pos);
    let gap = z1 - dgw;
    let force = magnet.force(gap, current)?;
    let (a1, a2) = two_mass_accelerations(z1 - z2, v1 - v2, force, mech);
    // The moving plant sees ṡ = ż1 − v·d_gw′(p); the controller model does
    // not (constant-disturbance assumption).
    let gap_rate = v1 - speed * profile.slope_at(pos);
    let didt = magnet.current_derivative(gap, gap_rate, current, voltage)?;
    Ok(DVector::from_vec(vec![v1, v2, a1, a2, didt, speed]))
}

/// Runs the closed loop. A levitation failure (air gap reaching 0 or twice
/// nominal, or a non-finite state) ends the run early with the partial log
/// and a diagnosis in `failure`; it is a result, not an error.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RideLog> {
    scenario.validate()?;
    let mech = scenario.mech;
    let magnet = scenario.magnet.clone();
    let params = *magnet.params();
    let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass)?;
    let mut controller = build_controller(&scenario.controller, &eq, &mech, &magnet)?;

    let delta = scenario.controller.sampling_time;
    let n_samples = (scenario.duration / delta).round().max(1.0) as usize;
    let n_sub = scenario.substeps_per_sample();
    let h = scenario.plant_step;

    let mut log = RideLog::with_capacity(n_samples * n_sub, n_samples);
    log.plant_step = h;
    log.sampling_time = delta;
    log.s_nom = params.s_nom;
    log.i_nom = eq.i_nom;
    log.u_nom = eq.u_nom;
    log.controller_name = scenario.controller.name.clone();

    // Equilibrium car-body height above the local guideway.
    let z2_eq_offset = params.s_nom - eq.dz2_nom;
    let dgw0 = scenario.guideway.deflection_at(0.0);
    let mut x = match &scenario.initial {
        InitialCondition::Equilibrium => DVector::from_vec(vec![
            params.s_nom + dgw0,
            z2_eq_offset + dgw0,
            0.0,
            0.0,
            eq.i_nom,
            0.0,
        ]),
        InitialCondition::Deviation(d) => DVector::from_vec(vec![
            params.s_nom + d.ds + dgw0,
            z2_eq_offset + d.dz2 + dgw0,
            d.v1,
            d.v2,
            eq.i_nom + d.di,
            0.0,
        ]),
        InitialCondition::Absolute(p) => {
            DVector::from_vec(vec![p.z1, p.z2, p.v1, p.v2, p.current, 0.0])
        }
    };

    'samples: for k in 0..n_samples {
        let t_k = k as f64 * delta;
        let pos = x[5];
        let dgw = scenario.guideway.deflection_at(pos);
        let gap = x[0] - dgw;

        if !x.iter().all(|v| v.is_finite()) {
            log.failure = Some(LevitationFailure {
                time: t_k,
                gap,
                reason: "plant state became non-finite".into(),
            });
            break;
        }
        if gap <= 0.0 || gap >= 2.0 * params.s_nom {
            log.failure = Some(LevitationFailure {
                time: t_k,
                gap,
                reason: format!("air gap {gap} m left (0, {}) m", 2.0 * params.s_nom),
            });
            break;
        }

        let meas = ControllerState {
            ds: gap - params.s_nom,
            dz2: match scenario.car_body_frame {
                CarBodyFrame::Guideway => (x[1] - dgw) - z2_eq_offset,
                CarBodyFrame::Inertial => x[1] - (z2_eq_offset + dgw0),
            },
            v1: x[2],
            v2: x[3],
            di: x[4] - eq.i_nom,
        };
        let (u, stats) = match controller.control_step(&meas) {
            Ok(r) => r,
            Err(e) => {
                log.failure = Some(LevitationFailure {
                    time: t_k,
                    gap,
                    reason: format!("controller failed: {e}"),
                });
                break;
            }
        };
        log.solve.push(SolveSample {
            sqp_iterations: stats.sqp_iterations,
            kkt: stats.kkt_residual,
            solve_time: stats.solve_time,
            converged: stats.converged,
        });
        let voltage = eq.u_nom + u;

        for j in 0..n_sub {
            let t = t_k + j as f64 * h;
            let pos = x[5];
            let dgw = scenario.guideway.deflection_at(pos);
            let gap = x[0] - dgw;
            // Row at the substep start.
            let derivative =
                match plant_derivative(&x, voltage, scenario.speed, &mech, &magnet, &scenario.guideway) {
                    Ok(d) => d,
                    Err(e) => {
                        log.failure = Some(LevitationFailure {
                            time: t,
                            gap,
                            reason: format!("plant evaluation failed: {e}"),
                        });
                        break 'samples;
                    }
                };
            log.time.push(t);
            log.gap.push(gap);
            log.ds.push(gap - params.s_nom);
            log.z2.push(x[1]);
            log.v1.push(x[2]);
            log.v2.push(x[3]);
            log.a1.push(derivative[2]);
            log.a2.push(derivative[3]);
            log.current.push(x[4]);
            log.voltage.push(voltage);
            log.u_dev.push(u);
            log.dgw.push(dgw);

            let f = |x: &DVector<f64>, u_vec: &DVector<f64>| {
                plant_derivative(x, u_vec[0], scenario.speed, &mech, &magnet, &scenario.guideway)
            };
            x = match rk4_step(&f, &x, &DVector::from_vec(vec![voltage]), h) {
                Ok(next) => next,
                Err(e) => {
                    log.failure = Some(LevitationFailure {
                        time: t,
                        gap,
                        reason: format!("plant integration failed: {e}"),
                    });
                    break 'samples;
                }
            };
        }
    }
    Ok(log)
}

/// Runs a batch of scenarios independently. `max_workers` caps the number
/// of concurrent runs; results keep the scenario order. Failures of one run
/// never affect the others.
pub fn run_comparison(scenarios: &[Scenario], max_workers: usize) -> Vec<Result<RideLog>> {
    let workers = max_workers.max(1);
    let mut results: Vec<Option<Result<RideLog>>> = Vec::new();
    results.resize_with(scenarios.len(), || None);

    for wave in (0..scenarios.len()).collect::<Vec<_>>().chunks(workers) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&idx| {
                    let scenario = &scenarios[idx];
                    (idx, scope.spawn(move || run_closed_loop(scenario)))
                })
                .collect();
            for (idx, handle) in handles {
                results[idx] = Some(handle.join().expect("simulation worker panicked"));
            }
        });
    }
    results.into_iter().map(|r| r.expect("all runs finished")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guideway::IrregularityPsd;
    use crate::model::MagnetParams;

    fn flat_scenario(duration: f64) -> Scenario {
        Scenario {
            speed: 600.0 / 3.6,
            duration,
            mech: MechanicalParams::default(),
            magnet: MagnetModel::analytic(MagnetParams::default()).unwrap(),
            guideway: GuidewayProfile::flat(),
            controller: ControllerConfig::c2m(),
            plant_step: 1e-4,
            initial: InitialCondition::Equilibrium,
            car_body_frame: CarBodyFrame::default(),
        }
    }

    #[test]
    fn equilibrium_hold_on_flat_guideway() {
        let log = run_closed_loop(&flat_scenario(0.5)).unwrap();
        assert!(log.failure.is_none());
        let max_ds = log.ds.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_u = log.u_dev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_ds < 1e-9, "max |Δs| = {max_ds}");
        assert!(max_u < 1e-9, "max |u| = {max_u}");
    }

    #[test]
    fn zoh_voltage_changes_only_at_sample_boundaries() {
        let mut scenario = flat_scenario(0.2);
        scenario.guideway =
            GuidewayProfile::new(31.0, 2e-3, None, 0, 200.0, 0.5).unwrap();
        let log = run_closed_loop(&scenario).unwrap();
        let n_sub = log.substeps_per_sample();
        for (r, w) in log.voltage.windows(2).enumerate() {
            if (r + 1) % n_sub != 0 {
                assert_eq!(w[0], w[1], "voltage changed mid-sample at row {r}");
            }
        }
    }

    #[test]
    fn stochastic_guideway_passes_through_to_log() {
        let target = 0.5e-3;
        let mut scenario = flat_scenario(2.0);
        scenario.guideway = GuidewayProfile::new(
            31.0,
            0.0,
            Some(IrregularityPsd {
                cutoff_wavelength: 10.0,
                target_rms: target,
            }),
            42,
            2.5 * scenario.speed,
            0.5,
        )
        .unwrap();
        let log = run_closed_loop(&scenario).unwrap();
        assert!(log.failure.is_none(), "failure: {:?}", log.failure);
        let rms =
            (log.dgw.iter().map(|v| v * v).sum::<f64>() / log.dgw.len() as f64).sqrt();
        assert!(
            (rms - target).abs() < 0.1 * target,
            "logged d_gw RMS {rms} vs target {target}"
        );
    }

    #[test]
    fn identical_scenarios_give_bit_identical_logs() {
        let mut scenario = flat_scenario(0.1);
        scenario.guideway = GuidewayProfile::new(
            31.0,
            2e-3,
            Some(IrregularityPsd::default()),
            7,
            50.0,
            0.5,
        )
        .unwrap();
        let a = run_closed_loop(&scenario).unwrap();
        let b = run_closed_loop(&scenario).unwrap();
        assert_eq!(a.ds, b.ds);
        assert_eq!(a.u_dev, b.u_dev);
        assert_eq!(a.a2, b.a2);
    }

    #[test]
    fn comparison_runs_are_order_independent() {
        let base = {
            let mut s = flat_scenario(0.05);
            s.guideway = GuidewayProfile::new(31.0, 1e-3, None, 3, 20.0, 0.5).unwrap();
            s
        };
        let s1 = base.with_controller(ControllerConfig::c1m());
        let s2 = base.with_controller(ControllerConfig::c2m());
        let fwd = run_comparison(&[s1.clone(), s2.clone()], 2);
        let rev = run_comparison(&[s2, s1], 1);
        let fwd: Vec<_> = fwd.into_iter().map(|r| r.unwrap()).collect();
        let rev: Vec<_> = rev.into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(fwd[0].ds, rev[1].ds);
        assert_eq!(fwd[1].ds, rev[0].ds);
        // Both rode the same deflection profile.
        assert_eq!(fwd[0].dgw, fwd[1].dgw);
    }

    #[test]
    fn collapsed_gap_reports_levitation_failure() {
        let mut scenario = flat_scenario(0.5);
        // Start touching the guideway: gap barely open, heavy downward speed.
        scenario.initial = InitialCondition::Deviation(ControllerState {
            ds: 0.009,
            dz2: 0.0,
            v1: 0.8,
            v2: 0.0,
            di: 0.0,
        });
        let log = run_closed_loop(&scenario).unwrap();
        let failure = log.failure.clone().expect("gap must leave the admissible band");
        assert!(failure.time <= 0.5);
        assert!(!log.is_empty() || failure.time == 0.0);
    }

    #[test]
    fn energy_balance_on_flat_guideway() {
        // From a perturbed start the plant integration must conserve
        // mechanical energy up to magnet work and damper dissipation. The
        // oracle integrates the power by trapezoid, so the probe runs at a
        // fine plant step to keep the quadrature error of the check itself
        // below the budget.
        // The oracle's remaining h² error sits at the zero-order-hold
        // switches (Ṗ jumps there), so the probe runs a fine plant step.
        let mut scenario = flat_scenario(2.0);
        scenario.plant_step = 5e-6;
        scenario.initial = InitialCondition::Deviation(ControllerState {
            ds: 0.5e-3,
            dz2: -0.3e-3,
            v1: 0.02,
            v2: 0.01,
            di: 0.0,
        });
        let log = run_closed_loop(&scenario).unwrap();
        assert!(log.failure.is_none());

        let mech = scenario.mech;
        let magnet = &scenario.magnet;
        let h = log.plant_step;
        // Energy from log rows; positions reconstructed from s (z1 = s on a
        // flat guideway) and z2.
        let energy = |i: usize| {
            let z1 = log.gap[i];
            let z2 = log.z2[i];
            let spring = z1 - z2;
            0.5 * mech.m1 * log.v1[i].powi(2) + 0.5 * mech.m2 * log.v2[i].powi(2)
                + 0.5 * mech.ck * spring * spring
                - (mech.m1 * z1 + mech.m2 * z2) * mech.g
        };
        let e0 = energy(0);
        // Characteristic scale of the perturbation energy.
        let e_char = 0.5 * mech.m1 * 0.02f64.powi(2)
            + 0.5 * mech.m2 * 0.01f64.powi(2)
            + 0.5 * mech.ck * 0.8e-3f64.powi(2);

        // Magnet + damper power at every log row.
        let power: Vec<f64> = (0..log.len())
            .map(|i| {
                let f = magnet.force(log.gap[i], log.current[i]).unwrap();
                -f * log.v1[i] - mech.cd * (log.v1[i] - log.v2[i]).powi(2)
            })
            .collect();
        // Trapezoid with the Euler–Maclaurin endpoint correction; without
        // it the h²/12·Ṗ boundary term of plain trapezoid dominates the
        // check during the initial transient.
        let p_dot = |i: usize| {
            if i == 0 {
                (power[1] - power[0]) / h
            } else if i + 1 == power.len() {
                (power[i] - power[i - 1]) / h
            } else {
                (power[i + 1] - power[i - 1]) / (2.0 * h)
            }
        };
        let mut work = 0.0;
        let mut worst: f64 = 0.0;
        for i in 1..log.len() {
            work += 0.5 * h * (power[i - 1] + power[i]);
            let corrected = work - h * h / 12.0 * (p_dot(i) - p_dot(0));
            let residual = (energy(i) - e0 - corrected).abs();
            worst = worst.max(residual / (1e-6 * e_char * (log.time[i] + 1.0)));
        }
        assert!(worst < 1.0, "worst residual at {worst} of the 1e-6/s budget");
    }
}

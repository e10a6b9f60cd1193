//! Gauss–Newton SQP over the multiple-shooting transcription.
//!
//! Each iteration linearizes dynamics and cost, solves the structured LQ
//! subproblem with input bounds, and applies the step under a backtracking
//! line search on an ℓ1 merit function (cost plus defect penalty). A full
//! step that fails the merit test first gets one second-order correction —
//! the same subproblem re-solved with the defects re-evaluated at the trial
//! point — before any backtracking; without it the defect penalty, whose
//! weight must dominate the (large) costates, rejects otherwise excellent
//! steps on curvature grounds alone. Two operating modes exist:
//! converge-to-tolerance and a single-iteration real-time mode that always
//! takes the full step.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::Result;

use super::riccati::{solve_qp_riccati, ActiveSet, BoundState, QpBounds, QpStage, QpTerminal};
use super::{
    evaluate_cost, kkt_residual_from_lin, linearize, KktMultipliers, OcpProblem,
    ShootingTrajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    /// Iterate until the KKT and defect tolerances hold (or max_iter).
    #[default]
    Converge,
    /// One linearize–solve–step cycle per call, full step, no line search.
    RealTimeIteration,
}

#[derive(Debug, Clone, Copy)]
pub struct SqpSettings {
    pub kkt_tol: f64,
    pub defect_tol: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
    /// Record per-iteration trace rows.
    pub trace: bool,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            defect_tol: 1e-8,
            max_iter: 30,
            mode: SolveMode::Converge,
            trace: false,
        }
    }
}

/// Per-solve statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub sqp_iterations: usize,
    pub kkt_residual: f64,
    pub max_defect: f64,
    /// Wall time of the solve [s].
    pub solve_time: f64,
    pub converged: bool,
    /// The LB recursion needed a Levenberg term at least once.
    pub regularized: bool,
    /// Input bounds active in the final subproblem.
    pub active_bounds: usize,
}

/// One row of the optional solver trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iteration: usize,
    pub kkt: f64,
    pub max_defect: f64,
    pub step_norm: f64,
    pub alpha: f64,
    pub merit: f64,
    pub active_bounds: usize,
}

/// Writes trace rows as CSV.
pub fn write_trace_csv(path: &std::path::Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iteration,kkt,max_defect,step_norm,alpha,merit,active_bounds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{}\n",
            r.iteration, r.kkt, r.max_defect, r.step_norm, r.alpha, r.merit, r.active_bounds
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// SQP solver for one OCP instance. Stateful only through the trace buffer;
/// the warm start is owned by the caller (the receding-horizon layer).
pub struct SqpSolver {
    pub problem: OcpProblem,
    pub settings: SqpSettings,
    trace: Vec<TraceRow>,
}

struct Candidate {
    traj: ShootingTrajectory,
    merit: f64,
    alpha: f64,
    corrected: bool,
}

enum StepOutcome {
    /// Armijo accepted.
    Strict(Candidate),
    /// Nothing passed: the largest evaluable candidate (full step when the
    /// model admits it) and the best-merit backtracked one.
    Fallback {
        largest: Option<Candidate>,
        best_small: Candidate,
    },
}

impl SqpSolver {
    pub fn new(problem: OcpProblem, settings: SqpSettings) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem,
            settings,
            trace: Vec::new(),
        })
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Continuity defects of a candidate plus the initial-condition
    /// residual, with their ℓ1 total.
    fn eval_defects(
        &self,
        traj: &ShootingTrajectory,
    ) -> Result<(Vec<DVector<f64>>, DVector<f64>, f64)> {
        let r0 = &self.problem.x0 - &traj.states[0];
        let mut l1 = r0.abs().sum();
        let mut vecs = Vec::with_capacity(self.problem.n_intervals);
        for k in 0..self.problem.n_intervals {
            let next = self.problem.dynamics.step(&traj.states[k], &traj.inputs[k])?;
            let d = next - &traj.states[k + 1];
            l1 += d.abs().sum();
            vecs.push(d);
        }
        Ok((vecs, r0, l1))
    }

    fn clamp_inputs(&self, traj: &mut ShootingTrajectory) {
        for u in &mut traj.inputs {
            for i in 0..u.len() {
                u[i] = u[i].clamp(self.problem.u_lower[i], self.problem.u_upper[i]);
            }
        }
    }

    /// Pins inputs whose working-set entry is at a bound to that bound.
    fn snap_active(&self, traj: &mut ShootingTrajectory, active: &ActiveSet) {
        for (k, row) in active.iter().enumerate() {
            for (i, state) in row.iter().enumerate() {
                match state {
                    BoundState::AtLower | BoundState::Equality => {
                        traj.inputs[k][i] = self.problem.u_lower[i]
                    }
                    BoundState::AtUpper => traj.inputs[k][i] = self.problem.u_upper[i],
                    BoundState::Free => {}
                }
            }
        }
    }

    fn delta_bounds(&self, traj: &ShootingTrajectory) -> QpBounds {
        QpBounds {
            lower: traj
                .inputs
                .iter()
                .map(|u| DVector::from_fn(u.len(), |i, _| self.problem.u_lower[i] - u[i]))
                .collect(),
            upper: traj
                .inputs
                .iter()
                .map(|u| DVector::from_fn(u.len(), |i, _| self.problem.u_upper[i] - u[i]))
                .collect(),
        }
    }

    /// Solves from the warm start with initial condition `x0`. On hitting
    /// the iteration limit the best iterate is returned with
    /// `converged = false`; the caller decides what to do with it.
    pub fn solve(
        &mut self,
        x0: &DVector<f64>,
        warm_start: &ShootingTrajectory,
    ) -> Result<(ShootingTrajectory, SolveStats)> {
        let start = Instant::now();
        self.trace.clear();
        self.problem.x0 = x0.clone();
        self.problem.validate()?;
        warm_start.check_dims(&self.problem)?;

        let mut traj = warm_start.clone();
        self.clamp_inputs(&mut traj);

        let mut stats = SolveStats::default();
        let mut warm_active: Option<ActiveSet> = None;
        let mut iterations = 0usize;
        let mut sigma = 10.0f64;
        // Watchdog: number of consecutive full steps taken without a strict
        // merit decrease, and the lowest-residual iterate seen so far.
        const RELAXED_LIMIT: usize = 5;
        let mut relaxed_streak = 0usize;
        let mut best_seen: Option<(f64, ShootingTrajectory, f64, f64)> = None;

        loop {
            let lin = match linearize(&self.problem, &traj) {
                Ok(lin) => lin,
                // A relaxed step may have wandered out of the model domain;
                // fall back to the best iterate instead of aborting the
                // receding-horizon loop.
                Err(e) => {
                    if let Some((_, best_traj, kkt, defect)) = best_seen {
                        traj = best_traj;
                        stats.kkt_residual = kkt;
                        stats.max_defect = defect;
                        stats.converged = false;
                        break;
                    }
                    return Err(e);
                }
            };
            let r0 = &self.problem.x0 - &traj.states[0];
            let max_defect = lin.max_defect.max(r0.amax());

            let stages: Vec<QpStage> = lin
                .stages
                .iter()
                .map(|s| QpStage {
                    a: s.a.clone(),
                    b: s.b.clone(),
                    d: s.defect.clone(),
                    hx: s.hx.clone(),
                    hu: s.hu.clone(),
                    gx: s.gx.clone(),
                    gu: s.gu.clone(),
                })
                .collect();
            let terminal = QpTerminal {
                hx: lin.terminal_hx.clone(),
                gx: lin.terminal_gx.clone(),
            };
            let qp = solve_qp_riccati(
                &stages,
                &terminal,
                &r0,
                Some(&self.delta_bounds(&traj)),
                warm_active.as_ref(),
            )?;
            stats.regularized |= qp.regularized;
            let active_bounds = qp
                .active
                .iter()
                .flatten()
                .filter(|s| !matches!(s, BoundState::Free))
                .count();

            let mult = KktMultipliers {
                costates: qp.costates.clone(),
                mu_lower: qp.mu_lower.clone(),
                mu_upper: qp.mu_upper.clone(),
            };
            let kkt = kkt_residual_from_lin(&self.problem, &traj, &lin, &mult);
            stats.kkt_residual = kkt;
            stats.max_defect = max_defect;
            stats.active_bounds = active_bounds;

            let step_norm = qp
                .du
                .iter()
                .map(|u| u.amax())
                .chain(qp.dx.iter().map(|x| x.amax()))
                .fold(0.0f64, f64::max);

            // Residual score of the current iterate, for best-so-far
            // bookkeeping on non-converged exits.
            let score = kkt.max(max_defect * 1e3);
            if best_seen.as_ref().map_or(true, |(s, ..)| score < *s) {
                best_seen = Some((score, traj.clone(), kkt, max_defect));
            }

            let converged = kkt <= self.settings.kkt_tol && max_defect <= self.settings.defect_tol;
            if self.settings.mode == SolveMode::Converge && converged {
                stats.converged = true;
                if self.settings.trace {
                    self.trace.push(TraceRow {
                        iteration: iterations,
                        kkt,
                        max_defect,
                        step_norm,
                        alpha: 0.0,
                        merit: evaluate_cost(&self.problem, &traj)?,
                        active_bounds,
                    });
                }
                break;
            }
            if iterations >= self.settings.max_iter {
                if let Some((_, best_traj, best_kkt, best_defect)) = best_seen {
                    traj = best_traj;
                    stats.kkt_residual = best_kkt;
                    stats.max_defect = best_defect;
                }
                stats.converged = false;
                break;
            }

            // The ℓ1 penalty must dominate the multiplier scale for the
            // merit to be exact; keep it non-decreasing within a solve. The
            // initial-condition constraint counts too — its multiplier
            // ν = gx₀ + A₀ᵀλ₁ dwarfs the continuity costates whenever the
            // measured state jumps.
            let mut lambda_max = qp
                .costates
                .iter()
                .map(|l| l.amax())
                .fold(0.0f64, f64::max);
            if !qp.costates.is_empty() {
                let nu = &lin.stages[0].gx + lin.stages[0].a.transpose() * &qp.costates[0];
                lambda_max = lambda_max.max(nu.amax());
            }
            sigma = sigma.max(2.0 * lambda_max + 1.0);

            let accepted = match self.settings.mode {
                SolveMode::RealTimeIteration => {
                    let mut cand = traj.clone();
                    apply_step(&mut cand, &qp.dx, &qp.du, 1.0);
                    self.snap_active(&mut cand, &qp.active);
                    self.clamp_inputs(&mut cand);
                    relaxed_streak = 0;
                    Candidate {
                        traj: cand,
                        merit: 0.0,
                        alpha: 1.0,
                        corrected: false,
                    }
                }
                SolveMode::Converge => {
                    let outcome = self.accept_step(
                        &traj, &lin, &stages, &terminal, &qp.dx, &qp.du, &qp.active, sigma,
                    )?;
                    match outcome {
                        StepOutcome::Strict(c) => {
                            relaxed_streak = 0;
                            c
                        }
                        StepOutcome::Fallback { largest, best_small } => {
                            // The merit rejects the Newton step on curvature
                            // grounds; let the contraction run for a few
                            // iterations before insisting on strict descent.
                            match largest {
                                Some(c) if relaxed_streak < RELAXED_LIMIT => {
                                    relaxed_streak += 1;
                                    c
                                }
                                _ => {
                                    relaxed_streak = 0;
                                    best_small
                                }
                            }
                        }
                    }
                }
            };
            traj = accepted.traj;
            warm_active = Some(qp.active);
            iterations += 1;

            if self.settings.trace {
                self.trace.push(TraceRow {
                    iteration: iterations,
                    kkt,
                    max_defect,
                    step_norm,
                    alpha: if accepted.corrected {
                        -accepted.alpha
                    } else {
                        accepted.alpha
                    },
                    merit: accepted.merit,
                    active_bounds,
                });
            }

            if self.settings.mode == SolveMode::RealTimeIteration {
                stats.converged = converged;
                break;
            }
        }

        stats.sqp_iterations = iterations;
        stats.solve_time = start.elapsed().as_secs_f64();
        Ok((traj, stats))
    }

    /// Globalization: Armijo test on the ℓ1 merit at the full step, one
    /// second-order correction on failure, then backtracking. Candidates
    /// whose defect evaluation fails (the step left the model domain) are
    /// unusable and skipped.
    #[allow(clippy::too_many_arguments)]
    fn accept_step(
        &self,
        traj: &ShootingTrajectory,
        lin: &super::Linearization,
        stages: &[QpStage],
        terminal: &QpTerminal,
        dx: &[DVector<f64>],
        du: &[DVector<f64>],
        active: &ActiveSet,
        sigma: f64,
    ) -> Result<StepOutcome> {
        let defect_l1_now: f64 = {
            let r0 = (&self.problem.x0 - &traj.states[0]).abs().sum();
            lin.stages.iter().map(|s| s.defect.abs().sum()).sum::<f64>() + r0
        };
        let phi0 = evaluate_cost(&self.problem, traj)? + sigma * defect_l1_now;
        let grad_dir: f64 = lin
            .stages
            .iter()
            .enumerate()
            .map(|(k, s)| s.gx.dot(&dx[k]) + s.gu.dot(&du[k]))
            .sum();
        let descent = (grad_dir - sigma * defect_l1_now).min(-1e-16);
        let armijo = |alpha: f64, phi: f64| phi <= phi0 + 1e-4 * alpha * descent;

        // Full step. A candidate only counts if it stays evaluable.
        let mut full = traj.clone();
        apply_step(&mut full, dx, du, 1.0);
        self.snap_active(&mut full, active);
        self.clamp_inputs(&mut full);
        let full_eval = self.eval_defects(&full).ok();
        let mut largest_candidate: Option<Candidate> = None;
        if let Some((full_defects, full_r0, full_l1)) = full_eval {
            let phi_full = evaluate_cost(&self.problem, &full)? + sigma * full_l1;
            if armijo(1.0, phi_full) {
                return Ok(StepOutcome::Strict(Candidate {
                    traj: full,
                    merit: phi_full,
                    alpha: 1.0,
                    corrected: false,
                }));
            }
            // Second-order correction: same subproblem, defects re-evaluated
            // at the trial point.
            let soc_stages: Vec<QpStage> = stages
                .iter()
                .zip(full_defects.iter())
                .map(|(s, d)| QpStage {
                    a: s.a.clone(),
                    b: s.b.clone(),
                    d: d.clone(),
                    hx: s.hx.clone(),
                    hu: s.hu.clone(),
                    gx: s.gx.clone(),
                    gu: s.gu.clone(),
                })
                .collect();
            let soc = solve_qp_riccati(
                &soc_stages,
                terminal,
                &full_r0,
                Some(&self.delta_bounds(&full)),
                Some(active),
            )?;
            let mut corrected = full.clone();
            apply_step(&mut corrected, &soc.dx, &soc.du, 1.0);
            self.snap_active(&mut corrected, &soc.active);
            self.clamp_inputs(&mut corrected);
            if let Ok((_, _, corr_l1)) = self.eval_defects(&corrected) {
                let phi_corr = evaluate_cost(&self.problem, &corrected)? + sigma * corr_l1;
                if armijo(1.0, phi_corr) {
                    return Ok(StepOutcome::Strict(Candidate {
                        traj: corrected,
                        merit: phi_corr,
                        alpha: 1.0,
                        corrected: true,
                    }));
                }
                largest_candidate = Some(if phi_corr < phi_full {
                    Candidate {
                        traj: corrected,
                        merit: phi_corr,
                        alpha: 1.0,
                        corrected: true,
                    }
                } else {
                    Candidate {
                        traj: full,
                        merit: phi_full,
                        alpha: 1.0,
                        corrected: false,
                    }
                });
            } else {
                largest_candidate = Some(Candidate {
                    traj: full,
                    merit: phi_full,
                    alpha: 1.0,
                    corrected: false,
                });
            }
        }

        // Backtracking along the original direction. A step this short is
        // no longer meaningful Newton progress, so below alpha_strict a
        // passing candidate only qualifies as the fallback — the watchdog
        // then prefers the full step and keeps the quadratic contraction
        // alive.
        let alpha_strict = 0.125;
        let mut best_small: Option<Candidate> = None;
        let mut alpha = 0.5;
        for _ in 0..14 {
            let mut cand = traj.clone();
            apply_step(&mut cand, dx, du, alpha);
            self.clamp_inputs(&mut cand);
            if let Ok((_, _, l1)) = self.eval_defects(&cand) {
                let phi = evaluate_cost(&self.problem, &cand)? + sigma * l1;
                if armijo(alpha, phi) {
                    let cand = Candidate {
                        traj: cand,
                        merit: phi,
                        alpha,
                        corrected: false,
                    };
                    if alpha >= alpha_strict {
                        return Ok(StepOutcome::Strict(cand));
                    }
                    return Ok(StepOutcome::Fallback {
                        largest: largest_candidate,
                        best_small: cand,
                    });
                }
                if largest_candidate.is_none() {
                    largest_candidate = Some(Candidate {
                        traj: cand.clone(),
                        merit: phi,
                        alpha,
                        corrected: false,
                    });
                }
                if best_small.as_ref().map_or(true, |b| phi < b.merit) {
                    best_small = Some(Candidate {
                        traj: cand,
                        merit: phi,
                        alpha,
                        corrected: false,
                    });
                }
            }
            alpha *= 0.5;
        }
        let best_small = best_small.unwrap_or(Candidate {
            // Every backtrack failed to evaluate; stay put.
            traj: traj.clone(),
            merit: phi0,
            alpha: 0.0,
            corrected: false,
        });
        Ok(StepOutcome::Fallback {
            largest: largest_candidate,
            best_small,
        })
    }
}

fn apply_step(
    traj: &mut ShootingTrajectory,
    dx: &[DVector<f64>],
    du: &[DVector<f64>],
    alpha: f64,
) {
    for (k, x) in traj.states.iter_mut().enumerate() {
        *x += &dx[k] * alpha;
    }
    for (k, u) in traj.inputs.iter_mut().enumerate() {
        *u += &du[k] * alpha;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{LinearDiscreteDynamics, LinearOutputMap};
    use nalgebra::DMatrix;

    fn linear_problem(n_intervals: usize, u_bound: f64) -> OcpProblem {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.05, 0.0, 0.98]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.05]);
        OcpProblem {
            n: 2,
            m: 1,
            n_intervals,
            step_len: 0.05,
            q_weights: DVector::from_vec(vec![4.0, 1.0]),
            r_weight: 0.1,
            y_ref: DVector::zeros(2),
            u_ref: DVector::zeros(1),
            u_lower: DVector::from_vec(vec![-u_bound]),
            u_upper: DVector::from_vec(vec![u_bound]),
            x0: DVector::zeros(2),
            dynamics: Box::new(LinearDiscreteDynamics { a, b }),
            output: Box::new(LinearOutputMap {
                c: DMatrix::identity(2, 2),
                y0: DVector::zeros(2),
            }),
        }
    }

    #[test]
    fn lq_problem_converges_in_one_iteration() {
        let mut solver =
            SqpSolver::new(linear_problem(10, 1e6), SqpSettings::default()).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let warm = ShootingTrajectory::zeros(2, 1, 10);
        let (traj, stats) = solver.solve(&x0, &warm).unwrap();
        assert!(stats.converged);
        assert!(stats.sqp_iterations <= 1, "took {}", stats.sqp_iterations);
        assert!(stats.max_defect <= 1e-8);
        // Defects vanish for linear dynamics after the full Newton step.
        assert_eq!(traj.states[0], x0);
    }

    #[test]
    fn warm_start_at_solution_takes_no_step() {
        let mut solver =
            SqpSolver::new(linear_problem(8, 1e6), SqpSettings::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.3, 0.1]);
        let warm = ShootingTrajectory::zeros(2, 1, 8);
        let (traj, stats) = solver.solve(&x0, &warm).unwrap();
        assert!(stats.converged);
        let (traj2, stats2) = solver.solve(&x0, &traj).unwrap();
        assert!(stats2.converged);
        assert_eq!(stats2.sqp_iterations, 0);
        assert_eq!(traj2, traj);
    }

    #[test]
    fn tight_bounds_pin_the_inputs() {
        let mut problem = linear_problem(6, 0.0);
        problem.u_lower = DVector::from_vec(vec![0.25]);
        problem.u_upper = DVector::from_vec(vec![0.25]);
        let mut solver = SqpSolver::new(problem, SqpSettings::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.2, 0.0]);
        let (traj, _stats) = solver.solve(&x0, &ShootingTrajectory::zeros(2, 1, 6)).unwrap();
        for u in &traj.inputs {
            assert_eq!(u[0], 0.25);
        }
        // States are the rollout under the constant input.
        let mut x = x0.clone();
        for k in 0..6 {
            assert!((&traj.states[k] - &x).amax() < 1e-12);
            x = solver.problem.dynamics.step(&x, &traj.inputs[k]).unwrap();
        }
    }

    #[test]
    fn saturated_solution_respects_bounds_exactly() {
        let mut solver =
            SqpSolver::new(linear_problem(12, 0.4), SqpSettings::default()).unwrap();
        let x0 = DVector::from_vec(vec![5.0, 0.0]);
        let (traj, stats) = solver.solve(&x0, &ShootingTrajectory::zeros(2, 1, 12)).unwrap();
        assert!(stats.converged);
        let saturated = traj.inputs.iter().filter(|u| u[0].abs() == 0.4).count();
        assert!(saturated > 0, "expected at least one saturated input");
        for u in &traj.inputs {
            assert!(u[0].abs() <= 0.4);
        }
    }

    #[test]
    fn kkt_residual_detects_perturbation() {
        let mut solver =
            SqpSolver::new(linear_problem(10, 1e6), SqpSettings::default()).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let (traj, stats) = solver.solve(&x0, &ShootingTrajectory::zeros(2, 1, 10)).unwrap();
        assert!(stats.kkt_residual <= 1e-6);

        let mut perturbed = traj.clone();
        perturbed.inputs[3][0] += 1e-3;
        let mult = KktMultipliers::zeros(2, 1, 10);
        // Even with zero multipliers the defect part alone flags the edit.
        let res = crate::ocp::kkt_residual(&solver.problem, &perturbed, &mult).unwrap();
        assert!(res > 1e-6);
    }

    #[test]
    fn real_time_iteration_takes_single_step() {
        let settings = SqpSettings {
            mode: SolveMode::RealTimeIteration,
            ..Default::default()
        };
        let mut solver = SqpSolver::new(linear_problem(10, 1e6), settings).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let (_, stats) = solver.solve(&x0, &ShootingTrajectory::zeros(2, 1, 10)).unwrap();
        assert_eq!(stats.sqp_iterations, 1);
    }

    #[test]
    fn trace_records_iterations() {
        let settings = SqpSettings {
            trace: true,
            ..Default::default()
        };
        let mut solver = SqpSolver::new(linear_problem(6, 1e6), settings).unwrap();
        let x0 = DVector::from_vec(vec![0.8, 0.2]);
        solver.solve(&x0, &ShootingTrajectory::zeros(2, 1, 6)).unwrap();
        assert!(!solver.trace().is_empty());
    }
}

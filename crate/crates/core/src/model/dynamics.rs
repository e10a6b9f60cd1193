//! Deviation-coordinate state-space model used by the controllers.
//!
//! The controller works in coordinates relative to the nominal equilibrium
//! and, per the constant-disturbance assumption, contains no guideway term:
//! the measured deviations absorb the disturbance present at sampling time.
//!
//! Two-mass variant (5 states):
//! `x = [Δs, Δz2, ż1, ż2, ΔI]`, outputs `y = [s, Δz2, z̈1, z̈2, I]`.
//! Single-mass variant (3 states):
//! `x = [Δs, ż1, ΔI]`, outputs `y = [s, z̈1, I]`.
//!
//! `Δz2` here is the car-body position relative to its own equilibrium in
//! the guideway frame, so `x = 0` is a fixed point of the dynamics and the
//! output reference is simply `[s_nom, 0, 0, 0, I_nom]`; this differs from
//! tracking an absolute car-body coordinate to a non-zero reference only by
//! a constant shift of both signal and reference, which leaves the tracking
//! residual unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::equilibrium::Equilibrium;
use super::magnet::MagnetModel;
use super::mechanics::{single_mass_acceleration, two_mass_accelerations};
use super::params::MechanicalParams;

/// Absolute plant state (truth frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Absolute magnet position z1 = s + d_gw [m].
    pub z1: f64,
    /// Absolute car-body position [m].
    pub z2: f64,
    /// ż1 [m/s].
    pub v1: f64,
    /// ż2 [m/s].
    pub v2: f64,
    /// Magnet current I [A].
    pub current: f64,
}

/// Deviation state supplied to the controllers (full-state measurement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    /// Δs = s − s_nom [m].
    pub ds: f64,
    /// Car-body deviation from equilibrium in the guideway frame [m].
    pub dz2: f64,
    /// ż1 [m/s].
    pub v1: f64,
    /// ż2 [m/s].
    pub v2: f64,
    /// ΔI = I − I_nom [A].
    pub di: f64,
}

impl ControllerState {
    pub fn zero() -> Self {
        Self {
            ds: 0.0,
            dz2: 0.0,
            v1: 0.0,
            v2: 0.0,
            di: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.ds, self.dz2, self.v1, self.v2, self.di]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Model outputs of the two-mass variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputVector {
    pub s: f64,
    pub dz2: f64,
    pub a1: f64,
    pub a2: f64,
    pub current: f64,
}

/// Which mechanical model backs the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SingleMass,
    TwoMass,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            Self::SingleMass => 3,
            Self::TwoMass => 5,
        }
    }
}

/// Deviation-coordinate dynamics `ẋ = f(x, u)` with output map `y = h(x)`.
#[derive(Debug, Clone)]
pub struct LevitationModel {
    kind: ModelKind,
    mech: MechanicalParams,
    magnet: MagnetModel,
    eq: Equilibrium,
    /// Effective static load of the single-mass variant, derived from the
    /// supplied equilibrium so that x = 0 stays a fixed point regardless of
    /// which model solved for I_nom.
    load_force: f64,
}

impl LevitationModel {
    pub fn new(
        kind: ModelKind,
        mech: MechanicalParams,
        magnet: MagnetModel,
        eq: Equilibrium,
    ) -> Result<Self> {
        mech.validate()?;
        let s_nom = magnet.params().s_nom;
        let load_force = magnet.force(s_nom, eq.i_nom)? - mech.m1 * mech.g;
        Ok(Self {
            kind,
            mech,
            magnet,
            eq,
            load_force,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn equilibrium(&self) -> &Equilibrium {
        &self.eq
    }

    pub fn mechanical(&self) -> &MechanicalParams {
        &self.mech
    }

    pub fn magnet(&self) -> &MagnetModel {
        &self.magnet
    }

    /// Output reference: equilibrium output, i.e. `[s_nom, 0, 0, 0, I_nom]`
    /// for the two-mass variant and `[s_nom, 0, I_nom]` for the single-mass.
    pub fn reference_output(&self) -> DVector<f64> {
        let s_nom = self.magnet.params().s_nom;
        match self.kind {
            ModelKind::TwoMass => {
                DVector::from_vec(vec![s_nom, 0.0, 0.0, 0.0, self.eq.i_nom])
            }
            ModelKind::SingleMass => DVector::from_vec(vec![s_nom, 0.0, self.eq.i_nom]),
        }
    }

    /// Reduces a full measurement to this variant's state vector.
    pub fn state_vector(&self, meas: &ControllerState) -> DVector<f64> {
        match self.kind {
            ModelKind::TwoMass => {
                DVector::from_vec(vec![meas.ds, meas.dz2, meas.v1, meas.v2, meas.di])
            }
            ModelKind::SingleMass => DVector::from_vec(vec![meas.ds, meas.v1, meas.di]),
        }
    }

    fn check_dims(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "state has {} entries, model expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// ẋ = f(x, u) with u the voltage deviation from U_nom.
    pub fn derivative(&self, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        self.check_dims(x)?;
        let p = self.magnet.params();
        match self.kind {
            ModelKind::TwoMass => {
                let (ds, dz2, v1, v2, di) = (x[0], x[1], x[2], x[3], x[4]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let force = self.magnet.force(s, current)?;
                let rel_pos = ds - dz2 + self.eq.dz2_nom;
                let (a1, a2) = two_mass_accelerations(rel_pos, v1 - v2, force, &self.mech);
                let didt = self
                    .magnet
                    .current_derivative(s, v1, current, self.eq.u_nom + u)?;
                Ok(DVector::from_vec(vec![v1, v2, a1, a2, didt]))
            }
            ModelKind::SingleMass => {
                let (ds, v1, di) = (x[0], x[1], x[2]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let force = self.magnet.force(s, current)?;
                let a1 = single_mass_acceleration(force, self.load_force, &self.mech);
                let didt = self
                    .magnet
                    .current_derivative(s, v1, current, self.eq.u_nom + u)?;
                Ok(DVector::from_vec(vec![v1, a1, didt]))
            }
        }
    }

    /// Analytic Jacobians (∂f/∂x, ∂f/∂u).
    pub fn derivative_jacobians(
        &self,
        x: &DVector<f64>,
        u: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_dims(x)?;
        let p = self.magnet.params();
        let mech = &self.mech;
        match self.kind {
            ModelKind::TwoMass => {
                let (ds, v1, di) = (x[0], x[2], x[4]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let (_, f_s, f_i) = self.magnet.force_with_grad(s, current)?;
                let cd_grad =
                    self.magnet
                        .current_derivative_with_grad(s, v1, current, self.eq.u_nom + u)?;
                let mut fx = DMatrix::zeros(5, 5);
                fx[(0, 2)] = 1.0;
                fx[(1, 3)] = 1.0;
                // a1 = g − (ck·rel_pos + cd·rel_vel + F)/m1
                fx[(2, 0)] = -(mech.ck + f_s) / mech.m1;
                fx[(2, 1)] = mech.ck / mech.m1;
                fx[(2, 2)] = -mech.cd / mech.m1;
                fx[(2, 3)] = mech.cd / mech.m1;
                fx[(2, 4)] = -f_i / mech.m1;
                // a2 = g + (ck·rel_pos + cd·rel_vel)/m2
                fx[(3, 0)] = mech.ck / mech.m2;
                fx[(3, 1)] = -mech.ck / mech.m2;
                fx[(3, 2)] = mech.cd / mech.m2;
                fx[(3, 3)] = -mech.cd / mech.m2;
                // İ row; ṡ = ż1.
                fx[(4, 0)] = cd_grad.d_ds;
                fx[(4, 2)] = cd_grad.d_dsdot;
                fx[(4, 4)] = cd_grad.d_di;
                let mut fu = DVector::zeros(5);
                fu[4] = cd_grad.d_du;
                Ok((fx, fu))
            }
            ModelKind::SingleMass => {
                let (ds, v1, di) = (x[0], x[1], x[2]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let (_, f_s, f_i) = self.magnet.force_with_grad(s, current)?;
                let cd_grad =
                    self.magnet
                        .current_derivative_with_grad(s, v1, current, self.eq.u_nom + u)?;
                let mut fx = DMatrix::zeros(3, 3);
                fx[(0, 1)] = 1.0;
                fx[(1, 0)] = -f_s / mech.m1;
                fx[(1, 2)] = -f_i / mech.m1;
                fx[(2, 0)] = cd_grad.d_ds;
                fx[(2, 1)] = cd_grad.d_dsdot;
                fx[(2, 2)] = cd_grad.d_di;
                let mut fu = DVector::zeros(3);
                fu[2] = cd_grad.d_du;
                Ok((fx, fu))
            }
        }
    }

    /// y = h(x). No direct input feedthrough.
    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x)?;
        let p = self.magnet.params();
        match self.kind {
            ModelKind::TwoMass => {
                let (ds, dz2, v1, v2, di) = (x[0], x[1], x[2], x[3], x[4]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let force = self.magnet.force(s, current)?;
                let rel_pos = ds - dz2 + self.eq.dz2_nom;
                let (a1, a2) = two_mass_accelerations(rel_pos, v1 - v2, force, &self.mech);
                Ok(DVector::from_vec(vec![s, dz2, a1, a2, current]))
            }
            ModelKind::SingleMass => {
                let (ds, _, di) = (x[0], x[1], x[2]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let force = self.magnet.force(s, current)?;
                let a1 = single_mass_acceleration(force, self.load_force, &self.mech);
                Ok(DVector::from_vec(vec![s, a1, current]))
            }
        }
    }

    /// Output Jacobian ∂h/∂x.
    pub fn output_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(x)?;
        let p = self.magnet.params();
        let mech = &self.mech;
        match self.kind {
            ModelKind::TwoMass => {
                let (ds, di) = (x[0], x[4]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let (_, f_s, f_i) = self.magnet.force_with_grad(s, current)?;
                let mut j = DMatrix::zeros(5, 5);
                j[(0, 0)] = 1.0;
                j[(1, 1)] = 1.0;
                j[(2, 0)] = -(mech.ck + f_s) / mech.m1;
                j[(2, 1)] = mech.ck / mech.m1;
                j[(2, 2)] = -mech.cd / mech.m1;
                j[(2, 3)] = mech.cd / mech.m1;
                j[(2, 4)] = -f_i / mech.m1;
                j[(3, 0)] = mech.ck / mech.m2;
                j[(3, 1)] = -mech.ck / mech.m2;
                j[(3, 2)] = mech.cd / mech.m2;
                j[(3, 3)] = -mech.cd / mech.m2;
                j[(4, 4)] = 1.0;
                Ok(j)
            }
            ModelKind::SingleMass => {
                let (ds, di) = (x[0], x[2]);
                let s = p.s_nom + ds;
                let current = self.eq.i_nom + di;
                let (_, f_s, f_i) = self.magnet.force_with_grad(s, current)?;
                let mut j = DMatrix::zeros(3, 3);
                j[(0, 0)] = 1.0;
                j[(1, 0)] = -f_s / mech.m1;
                j[(1, 2)] = -f_i / mech.m1;
                j[(2, 2)] = 1.0;
                Ok(j)
            }
        }
    }

    /// Two-mass output map with named fields.
    pub fn output_map(&self, meas: &ControllerState) -> Result<OutputVector> {
        let y = self.output(&self.state_vector(meas))?;
        match self.kind {
            ModelKind::TwoMass => Ok(OutputVector {
                s: y[0],
                dz2: y[1],
                a1: y[2],
                a2: y[3],
                current: y[4],
            }),
            ModelKind::SingleMass => Err(Error::Dimension(
                "output_map with named fields is defined for the two-mass model".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::equilibrium::solve_equilibrium;
    use crate::model::params::MagnetParams;
    use approx::assert_relative_eq;

    fn two_mass_model() -> LevitationModel {
        let mech = MechanicalParams::default();
        let magnet = MagnetModel::analytic(MagnetParams::default()).unwrap();
        let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).unwrap();
        LevitationModel::new(ModelKind::TwoMass, mech, magnet, eq).unwrap()
    }

    fn single_mass_model() -> LevitationModel {
        let mech = MechanicalParams::default();
        let magnet = MagnetModel::analytic(MagnetParams::default()).unwrap();
        let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).unwrap();
        LevitationModel::new(ModelKind::SingleMass, mech, magnet, eq).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        for model in [two_mass_model(), single_mass_model()] {
            let x = DVector::zeros(model.state_dim());
            let dx = model.derivative(&x, 0.0).unwrap();
            assert!(dx.amax() < 1e-10, "residual {dx}");
        }
    }

    #[test]
    fn unit_voltage_only_drives_current() {
        let model = two_mass_model();
        let x = DVector::zeros(5);
        let dx = model.derivative(&x, 1.0).unwrap();
        let p = model.magnet().params();
        let beta = p.s_nom / (2.0 * p.km);
        for k in 0..4 {
            assert!(dx[k].abs() < 1e-10);
        }
        assert_relative_eq!(dx[4], beta, max_relative = 1e-12);
    }

    #[test]
    fn widened_gap_reduces_force_and_accelerates_downward() {
        let model = two_mass_model();
        let mut x = DVector::zeros(5);
        x[0] = 0.001;
        let dx = model.derivative(&x, 0.0).unwrap();
        // z̈1 > 0 means the magnet falls away from the guideway: the gap
        // opened, the inverse-square force dropped below the weight share.
        assert!(dx[2] > 0.0, "a1 = {}", dx[2]);
    }

    #[test]
    fn reference_output_at_equilibrium() {
        let model = two_mass_model();
        let y = model.output(&DVector::zeros(5)).unwrap();
        let y_ref = model.reference_output();
        assert_relative_eq!((y - y_ref).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn output_reflects_gap_and_current_shifts() {
        let model = two_mass_model();
        let p = *model.magnet().params();
        let eq = *model.equilibrium();

        let mut x = DVector::zeros(5);
        x[0] = 1e-3;
        let y = model.output(&x).unwrap();
        assert_relative_eq!(y[0], p.s_nom + 1e-3, max_relative = 1e-12);
        let force = model.magnet().force(p.s_nom + 1e-3, eq.i_nom).unwrap();
        let mech = model.mechanical();
        let (a1_expect, a2_expect) = two_mass_accelerations(
            1e-3 + eq.dz2_nom,
            0.0,
            force,
            mech,
        );
        assert_relative_eq!(y[2], a1_expect, max_relative = 1e-12);
        assert_relative_eq!(y[3], a2_expect, max_relative = 1e-12);

        let mut x = DVector::zeros(5);
        x[4] = 1.0;
        let y = model.output(&x).unwrap();
        assert_relative_eq!(y[4], eq.i_nom + 1.0, max_relative = 1e-12);
        // Extra current pulls harder: z̈1 < 0.
        assert!(y[2] < 0.0);
    }

    #[test]
    fn jacobians_match_central_differences() {
        for model in [two_mass_model(), single_mass_model()] {
            let n = model.state_dim();
            let mut state = 0x853c49e6748fea9bu64;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            // Component scales of a ±20% neighbourhood of equilibrium.
            let scales: Vec<f64> = match model.kind() {
                ModelKind::TwoMass => vec![2e-3, 2e-3, 0.05, 0.05, 5.0],
                ModelKind::SingleMass => vec![2e-3, 0.05, 5.0],
            };
            for _ in 0..100 {
                let x = DVector::from_fn(n, |k, _| next() * scales[k]);
                let u = next() * 50.0;
                let (fx, fu) = model.derivative_jacobians(&x, u).unwrap();
                let mut fx_fd = DMatrix::zeros(n, n);
                for j in 0..n {
                    let h = 1e-6 * scales[j].max(1e-3);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let col =
                        (model.derivative(&xp, u).unwrap() - model.derivative(&xm, u).unwrap())
                            / (2.0 * h);
                    fx_fd.set_column(j, &col);
                }
                let h = 1e-4;
                let fu_fd = (model.derivative(&x, u + h).unwrap()
                    - model.derivative(&x, u - h).unwrap())
                    / (2.0 * h);
                let denom = fx_fd.amax().max(1.0);
                assert!(
                    (fx.clone() - fx_fd).amax() / denom < 1e-5,
                    "state Jacobian mismatch"
                );
                assert!((fu - fu_fd).amax() / denom < 1e-5, "input Jacobian mismatch");
            }
        }
    }

    #[test]
    fn output_jacobian_matches_central_differences() {
        let model = two_mass_model();
        let x = DVector::from_vec(vec![5e-4, -3e-4, 0.02, -0.01, 0.8]);
        let j = model.output_jacobian(&x).unwrap();
        let mut j_fd = DMatrix::zeros(5, 5);
        for col in 0..5 {
            let h = 1e-7;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let d = (model.output(&xp).unwrap() - model.output(&xm).unwrap()) / (2.0 * h);
            j_fd.set_column(col, &d);
        }
        assert!((j - &j_fd).amax() / j_fd.amax() < 1e-5);
    }
}

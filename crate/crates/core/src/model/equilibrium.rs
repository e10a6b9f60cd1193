//! Nominal equilibrium of the levitation unit.

use crate::error::{Error, Result};

use super::dynamics::ModelKind;
use super::magnet::MagnetModel;
use super::params::MechanicalParams;

/// Nominal operating point: levitation current, holding voltage and static
/// suspension deflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    /// Nominal current I_nom [A].
    pub i_nom: f64,
    /// Nominal voltage U_nom = rc·I_nom [V].
    pub u_nom: f64,
    /// Static spring deflection z1 − z2 at rest, −m2·g/ck [m].
    pub dz2_nom: f64,
}

/// Solves F_mag(s_nom, I_nom) = W for I_nom ≥ 0, where W is the levitated
/// weight of the chosen model variant, then polishes with Newton steps.
/// The holding voltage follows from the resistive steady state.
pub fn solve_equilibrium(
    mech: &MechanicalParams,
    magnet: &MagnetModel,
    kind: ModelKind,
) -> Result<Equilibrium> {
    mech.validate()?;
    let p = *magnet.params();
    let target = match kind {
        ModelKind::TwoMass => (mech.m1 + mech.m2) * mech.g,
        ModelKind::SingleMass => mech.m1 * mech.g + mech.fl,
    };

    let residual = |i: f64| -> Result<f64> { Ok(magnet.force(p.s_nom, i)? - target) };

    // Expand the bracket [0, i_hi] until the force exceeds the weight.
    let mut i_hi = 1.0;
    let r_lo = residual(0.0)?;
    if r_lo > 0.0 {
        return Err(Error::InfeasibleEquilibrium(format!(
            "force at zero current already exceeds weight {target} N"
        )));
    }
    loop {
        match residual(i_hi) {
            Ok(r) if r >= 0.0 => break,
            Ok(_) => {
                i_hi *= 2.0;
                if i_hi > 1e9 {
                    return Err(Error::InfeasibleEquilibrium(format!(
                        "no current below 1e9 A produces {target} N at s_nom = {} m",
                        p.s_nom
                    )));
                }
            }
            // A table backend runs off its grid before the bracket closes.
            Err(Error::TableOutOfRange { .. }) => {
                return Err(Error::InfeasibleEquilibrium(format!(
                    "no sign change on bracket: magnet table cannot produce {target} N"
                )));
            }
            Err(e) => return Err(e),
        }
    }

    let mut lo = 0.0;
    let mut hi = i_hi;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut i_nom = 0.5 * (lo + hi);

    // Newton polish on F(s_nom, i) − W.
    for _ in 0..8 {
        let (f, _, f_i) = magnet.force_with_grad(p.s_nom, i_nom)?;
        if f_i.abs() < f64::MIN_POSITIVE {
            break;
        }
        let step = (f - target) / f_i;
        i_nom -= step;
        if step.abs() <= 1e-16 * i_nom.abs() {
            break;
        }
    }

    let achieved = magnet.force(p.s_nom, i_nom)?;
    if (achieved - target).abs() > 1e-9 * target.abs() {
        return Err(Error::InfeasibleEquilibrium(format!(
            "force residual {} N exceeds tolerance",
            achieved - target
        )));
    }

    Ok(Equilibrium {
        i_nom,
        u_nom: p.rc * i_nom,
        dz2_nom: -mech.m2 * mech.g / mech.ck,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::magnet::MagnetTable;
    use crate::model::params::MagnetParams;
    use approx::assert_relative_eq;

    #[test]
    fn analytic_equilibrium_has_closed_form() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        let magnet = MagnetModel::analytic(p).unwrap();
        let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).unwrap();
        let expected = p.s_nom * ((mech.m1 + mech.m2) * mech.g / p.km).sqrt();
        assert_relative_eq!(eq.i_nom, expected, max_relative = 1e-12);
        assert_relative_eq!(eq.u_nom, p.rc * expected, max_relative = 1e-12);
        assert_relative_eq!(eq.dz2_nom, -mech.m2 * mech.g / mech.ck, epsilon = 1e-15);
    }

    #[test]
    fn quadrupling_km_halves_current() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        let p4 = MagnetParams { km: 4.0 * p.km, ..p };
        let i1 = solve_equilibrium(&mech, &MagnetModel::analytic(p).unwrap(), ModelKind::TwoMass)
            .unwrap()
            .i_nom;
        let i4 = solve_equilibrium(&mech, &MagnetModel::analytic(p4).unwrap(), ModelKind::TwoMass)
            .unwrap()
            .i_nom;
        assert_relative_eq!(i4, i1 / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn single_mass_uses_static_load() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        let magnet = MagnetModel::analytic(p).unwrap();
        let eq = solve_equilibrium(&mech, &magnet, ModelKind::SingleMass).unwrap();
        let expected = p.s_nom * ((mech.m1 * mech.g + mech.fl) / p.km).sqrt();
        assert_relative_eq!(eq.i_nom, expected, max_relative = 1e-12);
    }

    #[test]
    fn table_backend_matches_analytic_current() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        let s_grid: Vec<f64> = (0..161).map(|k| 0.004 + 0.0001 * k as f64).collect();
        let i_grid: Vec<f64> = (0..601).map(|k| 0.1 * k as f64).collect();
        let table = MagnetTable::from_analytic(&p, &s_grid, &i_grid).unwrap();
        let tm = MagnetModel::with_table(p, table).unwrap();
        let am = MagnetModel::analytic(p).unwrap();
        let ia = solve_equilibrium(&mech, &am, ModelKind::TwoMass).unwrap().i_nom;
        let it = solve_equilibrium(&mech, &tm, ModelKind::TwoMass).unwrap().i_nom;
        assert_relative_eq!(it, ia, max_relative = 1e-6);
    }

    #[test]
    fn impossible_weight_is_infeasible() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        // A table that tops out far below the required force.
        let s_grid = vec![0.005, 0.010, 0.015];
        let i_grid = vec![0.0, 0.5, 1.0];
        let table = MagnetTable::from_analytic(&p, &s_grid, &i_grid).unwrap();
        let tm = MagnetModel::with_table(p, table).unwrap();
        assert!(matches!(
            solve_equilibrium(&mech, &tm, ModelKind::TwoMass),
            Err(Error::InfeasibleEquilibrium(_))
        ));
    }

    #[test]
    fn current_steady_state_is_exact() {
        let mech = MechanicalParams::default();
        let p = MagnetParams::default();
        let magnet = MagnetModel::analytic(p).unwrap();
        let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).unwrap();
        let di = magnet
            .current_derivative(p.s_nom, 0.0, eq.i_nom, eq.u_nom)
            .unwrap();
        assert!(di.abs() < 1e-12);
    }
}

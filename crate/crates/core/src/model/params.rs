//! Physical parameter sets for the levitation unit.
//!
//! All defaults live here as associated constants of the `Default` impls;
//! nothing downstream hard-codes a physical value.

use crate::error::{Error, Result};

/// Mechanical parameters of the two-mass suspension model.
///
/// `m1` is one half levitation magnet plus one quarter levitation chassis,
/// `m2` the partial car-body mass riding on the spring/damper pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalParams {
    /// Unsprung mass (half magnet + quarter chassis) [kg].
    pub m1: f64,
    /// Sprung partial car-body mass [kg].
    pub m2: f64,
    /// Suspension stiffness [N/m].
    pub ck: f64,
    /// Suspension damping [N·s/m].
    pub cd: f64,
    /// Gravitational acceleration [m/s²].
    pub g: f64,
    /// Static load force for the single-mass variant [N].
    pub fl: f64,
}

impl MechanicalParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 6] = [
            ("m1", self.m1, self.m1 > 0.0),
            ("m2", self.m2, self.m2 > 0.0),
            ("ck", self.ck, self.ck > 0.0),
            ("cd", self.cd, self.cd >= 0.0),
            ("g", self.g, self.g > 0.0),
            ("fl", self.fl, self.fl >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("got {value}"),
                });
            }
        }
        Ok(())
    }

    /// First eigenfrequency of the sprung mass, `sqrt(ck/m2)/(2π)` [Hz].
    pub fn sprung_eigenfrequency(&self) -> f64 {
        (self.ck / self.m2).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

impl Default for MechanicalParams {
    /// Suspension tuned to a 1.0 Hz sprung eigenfrequency with damping
    /// ratio 0.05 (air-spring-like secondary stage); static load equals
    /// the sprung weight so that the single-mass and two-mass equilibria
    /// coincide.
    fn default() -> Self {
        let m1 = 500.0;
        let m2 = 3000.0;
        let f0 = 1.0;
        let zeta = 0.05;
        let ck = m2 * (2.0 * std::f64::consts::PI * f0).powi(2);
        let cd = 2.0 * zeta * (ck * m2).sqrt();
        let g = 9.81;
        Self {
            m1,
            m2,
            ck,
            cd,
            g,
            fl: m2 * g,
        }
    }
}

/// Which electromagnetic model backs force and current dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MagnetBackendKind {
    /// Single-coil analytic model: F = km·(I/s)², L(s) = 2·km/s.
    #[default]
    Analytic,
    /// Bilinear interpolation over a loaded (s, I) grid file.
    Table,
}

/// Electromagnet parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetParams {
    /// Force constant of the analytic model [N·m²/A²].
    pub km: f64,
    /// Coil resistance [Ω].
    pub rc: f64,
    /// Nominal air gap [m].
    pub s_nom: f64,
    /// Symmetric input deviation bound: u ∈ [-u_max, +u_max] [V].
    pub u_max: f64,
    /// Backend selector.
    pub backend: MagnetBackendKind,
}

impl MagnetParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 4] = [
            ("km", self.km, self.km > 0.0),
            ("rc", self.rc, self.rc > 0.0),
            ("s_nom", self.s_nom, self.s_nom > 0.0),
            ("u_max", self.u_max, self.u_max > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("got {value}"),
                });
            }
        }
        Ok(())
    }
}

impl Default for MagnetParams {
    /// km sized so the default two-mass plant levitates at 5 A (a
    /// high-turn-count coil: large force per ampere, henry-scale
    /// inductance).
    fn default() -> Self {
        let mech = MechanicalParams::default();
        let s_nom = 0.010_f64;
        let i_nom = 5.0;
        let km = (mech.m1 + mech.m2) * mech.g * (s_nom / i_nom).powi(2);
        Self {
            km,
            rc: 1.0,
            s_nom,
            u_max: 300.0,
            backend: MagnetBackendKind::Analytic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        MechanicalParams::default().validate().unwrap();
        MagnetParams::default().validate().unwrap();
    }

    #[test]
    fn default_eigenfrequency_is_one_hertz() {
        let p = MechanicalParams::default();
        assert!((p.sprung_eigenfrequency() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let p = MechanicalParams {
            m1: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_nonpositive_km() {
        let p = MagnetParams {
            km: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}

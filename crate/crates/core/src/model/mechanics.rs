//! Vertical rigid-body mechanics of the levitation unit.
//!
//! Sign convention, used everywhere in this crate: the z axis points from
//! the guideway toward the vehicle, i.e. in the direction of gravity, so
//! both masses see +g and the magnet force enters the unsprung mass with a
//! minus sign (it pulls the magnet toward the guideway). Absolute positions
//! are `z1 = s + d_gw` for the magnet and `z2` for the car body; a growing
//! `z1` means a widening air gap.
//!
//! Two-mass equations of motion:
//!
//! ```text
//! m1·z̈1 = m1·g − ck·(z1 − z2) − cd·(ż1 − ż2) − F_mag
//! m2·z̈2 = m2·g + ck·(z1 − z2) + cd·(ż1 − ż2)
//! ```

use super::params::MechanicalParams;

/// Accelerations (z̈1, z̈2) of the two-mass model for the given relative
/// kinematics and magnet force.
pub fn two_mass_accelerations(
    rel_pos: f64,
    rel_vel: f64,
    magnet_force: f64,
    p: &MechanicalParams,
) -> (f64, f64) {
    let coupling = p.ck * rel_pos + p.cd * rel_vel;
    let a1 = p.g - (coupling + magnet_force) / p.m1;
    let a2 = p.g + coupling / p.m2;
    (a1, a2)
}

/// Acceleration of the single-mass model: the magnet carries a static load
/// force in place of the sprung mass.
pub fn single_mass_acceleration(magnet_force: f64, load_force: f64, p: &MechanicalParams) -> f64 {
    p.g + load_force / p.m1 - magnet_force / p.m1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn static_balance_gives_zero_accelerations() {
        let p = MechanicalParams::default();
        // Spring carries the sprung weight, magnet the total weight.
        let rel_pos = -p.m2 * p.g / p.ck;
        let f_mag = (p.m1 + p.m2) * p.g;
        let (a1, a2) = two_mass_accelerations(rel_pos, 0.0, f_mag, &p);
        assert_relative_eq!(a1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(a2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn free_fall_without_forces() {
        let p = MechanicalParams::default();
        let (a1, a2) = two_mass_accelerations(0.0, 0.0, 0.0, &p);
        assert_eq!((a1, a2), (p.g, p.g));
        let p0 = MechanicalParams { fl: 0.0, ..p };
        assert_eq!(single_mass_acceleration(0.0, 0.0, &p0), p.g);
    }

    #[test]
    fn unit_spring_coupling() {
        // m1 = m2 = ck = 1, cd = 0, unit extension, gravity and magnet off.
        let p = MechanicalParams {
            m1: 1.0,
            m2: 1.0,
            ck: 1.0,
            cd: 0.0,
            g: 0.0,
            fl: 0.0,
        };
        let (a1, a2) = two_mass_accelerations(1.0, 0.0, 0.0, &p);
        assert_eq!((a1, a2), (-1.0, 1.0));
    }

    #[test]
    fn single_mass_levitation_balance() {
        let p = MechanicalParams {
            m1: 500.0,
            fl: 4905.0,
            g: 9.81,
            ..MechanicalParams::default()
        };
        assert_relative_eq!(
            single_mass_acceleration(p.m1 * p.g + p.fl, p.fl, &p),
            0.0,
            epsilon = 1e-12
        );
        // 9.81 + 4905/500 − 9810/500 = 0
        assert_relative_eq!(
            single_mass_acceleration(9810.0, 4905.0, &p),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn internal_forces_cancel_in_momentum_sum() {
        let p = MechanicalParams::default();
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..100 {
            let (a1, a2) = two_mass_accelerations(next() * 0.1, next(), 0.0, &p);
            assert_relative_eq!(
                p.m1 * a1 + p.m2 * a2,
                (p.m1 + p.m2) * p.g,
                max_relative = 1e-12
            );
        }
    }
}

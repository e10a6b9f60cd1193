//! Shared fixtures for the criterion benches.

use maglev_nmpc::controllers::{build_controller, ControllerConfig, ControllerInstance};
use maglev_nmpc::model::{
    solve_equilibrium, MagnetModel, MagnetParams, MechanicalParams, ModelKind,
};

pub fn default_setup() -> (MechanicalParams, MagnetModel) {
    let mech = MechanicalParams::default();
    let magnet = MagnetModel::analytic(MagnetParams::default()).expect("valid params");
    (mech, magnet)
}

pub fn controller(cfg: &ControllerConfig) -> ControllerInstance {
    let (mech, magnet) = default_setup();
    let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass).expect("equilibrium");
    build_controller(cfg, &eq, &mech, &magnet).expect("controller")
}

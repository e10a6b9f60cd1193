//! Physical model of one levitation unit: parameters, electromagnet,
//! vertical mechanics, deviation-coordinate dynamics and the nominal
//! equilibrium.

pub mod dynamics;
pub mod equilibrium;
pub mod magnet;
pub mod mechanics;
pub mod params;

pub use dynamics::{ControllerState, LevitationModel, ModelKind, OutputVector, PlantState};
pub use equilibrium::{solve_equilibrium, Equilibrium};
pub use magnet::{CurrentDerivative, MagnetModel, MagnetTable};
pub use mechanics::{single_mass_acceleration, two_mass_accelerations};
pub use params::{MagnetBackendKind, MagnetParams, MechanicalParams};

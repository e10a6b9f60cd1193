//! Closed-loop simulation and control suite for an electromagnetic-
//! suspension maglev levitation unit: plant dynamics, guideway disturbance,
//! a multiple-shooting SQP solver with a Riccati-structured QP, the
//! receding-horizon controllers, and the ride-quality analysis toolbox.

pub mod analysis;
pub mod controllers;
pub mod error;
pub mod guideway;
pub mod model;
pub mod ocp;
pub mod odeint;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{
    ControllerState, Equilibrium, LevitationModel, MagnetBackendKind, MagnetModel, MagnetParams,
    MagnetTable, MechanicalParams, ModelKind, OutputVector, PlantState,
};

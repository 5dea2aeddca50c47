//! Vehicle roll model: wheel reactions, tire forces, equations of motion,
//! reference path and path constraints.

mod config;
pub mod model;
mod reference;
pub mod state;
mod steering;

pub use config::{TireConstants, VehicleConfig};
pub use model::{
    antiroll_branch_functions, conservative_constraints, dynamics_rhs, lateral_acceleration, path_constraint_residuals,
    slip_angle, tire_force_switched, tire_lateral_force, wheel_loads, wheel_reactions, BranchValues, TireSwitch,
};
pub use reference::{reference_trajectory, ReferencePath};
pub use state::{ControlInput, VehicleState, WheelLoads, INITIAL_SPEED, STATE_DIM, STATE_NAMES};
pub use steering::{FishhookParams, SteeringProfile, PROFILE_NAMES};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid vehicle configuration: {0}")]
    InvalidConfig(String),
    #[error("state or control input is not finite")]
    InvalidState,
    #[error("longitudinal speed at wheel {wheel} is too small for a slip angle")]
    DegenerateSpeed { wheel: usize },
    #[error("tire model is singular at load {load} N")]
    TireSingularity { load: f64 },
    #[error("roll angle {roll} rad reached the tan singularity")]
    RollSingularity { roll: f64 },
    #[error("CG height {height} m is too small for the anti-roll branch")]
    GeometricSingularity { height: f64 },
    #[error("reference integration failed near t = {time} s")]
    ReferenceIntegration { time: f64 },
    #[error("invalid steering profile: {0}")]
    InvalidSteering(String),
    #[error("unknown steering profile `{0}`")]
    UnknownProfile(String),
}

//! Stationary balance and end-effector pose control for a two-wheel-steered
//! bikebot carrying a serial manipulator.
//!
//! The crate is generic over the scalar type (see [`Real`]); `f64` aliases
//! are exported at the root for everyday use.

pub mod bem;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod files;
pub mod model;
pub mod optim;
pub mod planner;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod steering;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BikebotParams = model::BikebotParams<f64>;
pub type LinkParams = model::LinkParams<f64>;
pub type RobotModel = model::RobotModel<f64>;
pub type Configuration = model::Configuration<f64>;
pub type Pose = model::Pose<f64>;
pub type DynamicsMatrices = dynamics::DynamicsMatrices<f64>;

/// Single-precision model, mainly for cross-checking the generic code.
pub type RobotModelF32 = model::RobotModel<f32>;

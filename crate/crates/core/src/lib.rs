//! Differentiable rigid-body dynamics.
//!
//! Every dynamics routine is generic over [`Scalar`], so the same code runs on
//! plain floats, on [`Dual`] numbers for forward derivatives and on tape
//! [`Var`]iables for reverse-mode gradients.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimate;
pub mod integrate;
pub mod model;
pub mod scalar;
pub mod sensitivity;
pub mod spatial;

pub use error::{Error, Result};
pub use scalar::{Dual, Scalar, Var};

/// Model instantiated on forward-mode duals.
pub type DualModel = model::Model<Dual>;
/// Model instantiated on tape variables.
pub type TapeModel = model::Model<Var>;
pub type DualState = dynamics::State<Dual>;
pub type TapeState = dynamics::State<Var>;
pub type SpatialMotion = spatial::SpatialMotion<f64>;
pub type SpatialForce = spatial::SpatialForce<f64>;
pub type SpatialTransform = spatial::SpatialTransform<f64>;
pub type SpatialInertia = spatial::SpatialInertia<f64>;

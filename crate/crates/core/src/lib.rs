//! Temporal neuro-fuzzy system (TNFS) toolkit: recurrent Takagi-Sugeno fuzzy
//! state-space models for fault detection, diagnosis and short-horizon
//! prognosis of industrial processes.
//!
//! The crate is organized around one model type, [`TnfsModel`]: a rule base of
//! Gaussian antecedents with local linear state-space consequents, blended by
//! normalized firing strengths into a single state update `x(t+1) = A x(t) +
//! B u(t)` and readout `y = C x`. Around it sit
//!
//! - [`model`] — inference: memberships, firing strengths, aggregation,
//!   single-step transition and recurrent rollout;
//! - [`train`] — full-sequence backpropagation through time, a
//!   finite-difference gradient oracle, and plain gradient-descent training;
//! - [`cluster`] — fuzzy C-means rule initialization with a validity-index
//!   scan over candidate rule counts;
//! - [`plant`] — a seeded surrogate plant that generates labeled sensor
//!   trajectories with injectable incipient/abrupt faults;
//! - [`dataset`] — windowing, z-score normalization and scenario-level splits;
//! - [`diagnosis`] — window classification, normal/abnormal detection,
//!   autoregressive horizon prediction and metric reports;
//! - [`archive`] / [`csvio`] — versioned model persistence and the CSV /
//!   manifest exchange formats used by the CLI.
//!
//! All core math is generic over the scalar type via [`Scalar`]; concrete
//! `f64` aliases are exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod archive;
pub mod cluster;
pub mod csvio;
pub mod dataset;
pub mod diagnosis;
pub mod error;
pub mod linalg;
pub mod model;
pub mod plant;
pub mod seed;
pub mod train;

pub use error::{Result, TnfsError};

/// Scalar type the numeric core is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// Smallest admissible Gaussian term width, in normalized signal units.
/// Widths are clamped here after every training update.
pub const WIDTH_FLOOR: f64 = 1e-3;

/// Threshold on the firing-strength sum below which normalization falls back
/// to the uniform weight vector instead of dividing by (near-)zero.
pub const UNDERFLOW_EPS: f64 = 1e-30;

/// `WIDTH_FLOOR` converted to the working scalar type.
pub fn width_floor<F: Scalar>() -> F {
    F::from_f64(WIDTH_FLOOR).unwrap()
}

/// `UNDERFLOW_EPS` converted to the working scalar type.
pub fn underflow_eps<F: Scalar>() -> F {
    F::from_f64(UNDERFLOW_EPS).unwrap()
}

pub type Model64 = model::TnfsModel<f64>;
pub type Model32 = model::TnfsModel<f32>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type Archive64 = archive::ModelArchive<f64>;

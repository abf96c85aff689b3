//! Polynomial approximate attention, a two-level memory I/O simulator and
//! tiling schedules whose I/O can be counted exactly.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common double precision instantiations.

pub mod attention;
pub mod combinatorics;
pub mod error;
pub mod featuremap;
pub mod iosim;
pub mod matrix;
pub mod planner;
pub mod polyapprox;
pub mod problem;
pub mod scalar;
pub mod schedules;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type PolyApprox64 = polyapprox::PolyApprox<f64>;
pub type PolyApprox32 = polyapprox::PolyApprox<f32>;
pub type FeatureMap64 = featuremap::FeatureMap<f64>;
pub type ProblemInstance64 = problem::ProblemInstance<f64>;
pub type AttentionResult64 = attention::AttentionResult<f64>;

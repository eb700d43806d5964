//! Parallel split learning with leader gradient identification and gradient
//! direction alignment, plus PSL, SFL, and vanilla SL baselines.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); experiment
//! runs use `f32` models and `f64` coordination math.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gda;
pub mod geometry;
pub mod harness;
pub mod lgi;
pub mod nn;
pub mod orchestrator;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix32 = nn::Matrix<f32>;
pub type Matrix64 = nn::Matrix<f64>;
pub type SplitModel32 = nn::SplitModel<f32>;
pub type SplitModel64 = nn::SplitModel<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type GradientVector32 = geometry::GradientVector<f32>;
pub type GradientVector64 = geometry::GradientVector<f64>;

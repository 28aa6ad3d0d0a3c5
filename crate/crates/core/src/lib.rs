//! Importance-based variable selection (IVS) for stacked denoising auto-encoders.
//!
//! A multinomial logistic regression pre-classifier scores each input
//! variable by how sensitive its pairwise discriminant hyperplanes are to
//! it; variables below an importance threshold are masked out, and denoising
//! auto-encoders are then trained layer by layer on the surviving variables.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` and `f32`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! experiment driver and the gradient checks use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dae;
pub mod data;
pub mod ivs;
mod error;
pub mod mlr;
pub mod numerics;
pub mod pgm;
pub mod stack;

pub use data::{LabelBase, SyntheticSpec, VariableMask};
pub use error::{Error, Result};
pub use mlr::ErrorReport;
pub use numerics::{Rng, Scalar};

pub type Matrix = numerics::Matrix<f64>;
pub type Dataset = data::Dataset<f64>;
pub type MlrModel = mlr::MlrModel<f64>;
pub type TrainConfig = mlr::TrainConfig<f64>;
pub type DaeModel = dae::DaeModel<f64>;
pub type DaeTrainConfig = dae::DaeTrainConfig<f64>;
pub type IvsConfig = ivs::IvsConfig<f64>;
pub type IvsResult = ivs::IvsResult<f64>;
pub type StackConfig = stack::StackConfig<f64>;
pub type StackModel = stack::StackModel<f64>;

//! Kriging and gradient-enhanced kriging surrogate models.
//!
//! The crate builds interpolating surrogates of expensive functions from a
//! handful of samples, optionally exploiting gradients supplied alongside the
//! responses:
//!
//! * ordinary kriging with a Gaussian correlation kernel,
//! * KPLS / KPLSK — kriging with kernels projected through partial least
//!   squares coefficients, shrinking the hyperparameter count from `d` to `h`,
//! * indirect and direct gradient-enhanced kriging (GEK),
//! * GE-KPLS — gradient-enhanced kriging that runs PLS locally on Taylor
//!   point clouds around each sample and keeps only the `m` most influential
//!   extra points per sample.
//!
//! Numeric code is generic over the scalar type through [`Scalar`]; concrete
//! aliases for the common precisions live at the crate root. All model
//! internals operate on inputs normalized to the unit hypercube, so kernel
//! hyperparameters are dimensionless.

pub mod benchmarks;
pub mod doe;
pub mod error;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod models;
pub mod optimizer;
pub mod pls;

use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + SampleUniform
    + Sum<Self>
    + Product<Self>
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, saturating instead of failing.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| {
            if v > 0.0 {
                Self::max_value()
            } else {
                -Self::max_value()
            }
        })
    }

    /// Smallest positive value correlations are clamped to so they stay
    /// strictly positive after underflow.
    fn correlation_floor() -> Self {
        match Self::from_f64(1e-300) {
            Some(v) if v > Self::zero() => v,
            _ => Self::min_positive_value(),
        }
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + SampleUniform
        + Sum<T>
        + Product<T>
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

pub use crate::doe::{Bounds, Criterion, DisplacementKind, DisplacementSet, SamplingPlan};
pub use crate::error::{Error, Result};
pub use crate::kernels::{CorrelationMatrix, GradBlockMode, KernelSpec, NuggetPolicy};
pub use crate::models::{
    FittedSurrogate, GeKplsConfig, ModelKind, TrainingData,
};
pub use crate::optimizer::{OptResult, SearchSpace};
pub use crate::pls::PlsDecomposition;

/// Double-precision aliases, the default choice for fitting.
pub type Bounds64 = Bounds<f64>;
pub type TrainingData64 = TrainingData<f64>;
pub type Surrogate64 = FittedSurrogate<f64>;
pub type KernelSpec64 = KernelSpec<f64>;

/// Single-precision aliases.
pub type Bounds32 = Bounds<f32>;
pub type TrainingData32 = TrainingData<f32>;
pub type Surrogate32 = FittedSurrogate<f32>;
pub type KernelSpec32 = KernelSpec<f32>;

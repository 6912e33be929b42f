//! Layerwise loss-landscape analysis for small neural classifiers.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`] and [`tensor`]: a reverse-mode tape whose backward rules are
//!   themselves differentiable, giving exact Hessian-vector products and the
//!   third-order gradients needed by trace regularization.
//! * [`params`], [`models`], [`diff`]: flat parameter vectors with a layer map,
//!   the model zoo, and the model-level derivative operations.
//! * [`data`]: IDX files, Gaussian blobs, deterministic batching.
//! * [`hessops`]: matrix-free Hessian, layer blocks, Gauss-Newton and residual operators.
//! * [`spectral`]: Lanczos, stochastic Lanczos quadrature, Hutchinson trace.
//! * [`analysis`]: spectral distances, outlier counting, per-sample G factors.
//! * [`train`]: SGD with momentum, the trace regularizer, run logs and checkpoints.

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod diff;
pub mod error;
pub mod hessops;
pub mod models;
pub mod params;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{LayerSegment, ParamVector};
pub use tensor::Tensor;

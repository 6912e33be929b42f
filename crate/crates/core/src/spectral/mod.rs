//! Matrix-free spectral estimation: Lanczos tridiagonalization, stochastic
//! Lanczos quadrature densities, extreme eigenvalues and Hutchinson traces.

pub mod density;
pub mod lanczos;
pub mod operator;
pub mod trace;

pub use density::{rescale_to_unit, slq_density, SlqConfig, SpectralDensity, UnitRescaling};
pub use lanczos::{lambda_max, lanczos, EigenMode, TridiagonalFactor};
pub use operator::{AffineOperator, DenseOperator, SymmetricOperator};
pub use trace::{hutchinson_samples, hutchinson_trace, TraceEstimate};

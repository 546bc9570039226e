//! Side-channel trace analysis toolkit: I/Q trace I/O, spectral
//! featurization, dataset assembly, dense classifiers, evaluation metrics,
//! activity-correlation analysis, and a synthetic emanation simulator.
//!
//! All numeric pipeline code is generic over the scalar type through
//! [`num::Real`]; `f32` is the production width (matching the binary32 wire
//! formats), `f64` exists for high-precision verification. The crate root
//! re-exports concrete aliases for the common case.
//!
//! Every random decision in the crate flows from a caller-supplied `u64`
//! seed through ChaCha8, so equal inputs and seeds give byte-identical
//! outputs on every platform.

pub mod correlation;
pub mod dataset;
pub mod emusim;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod neuralnet;
pub mod num;
pub mod spectral;
pub mod trace_io;
pub(crate) mod wire;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use num::Real;
pub use wire::write_atomic;

/// Production-width feature matrix.
pub type Matrix32 = Matrix<f32>;
/// Verification-width feature matrix.
pub type Matrix64 = Matrix<f64>;

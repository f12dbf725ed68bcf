//! Continuous convolution of fields with piecewise-polynomial kernels.
//!
//! A kernel of order `n` is stored as the Diracs of its `n`-fold derivative.
//! Convolving a field with it then reduces to a handful of samples of the
//! field's `n`-fold antiderivative, either from an exact grid oracle or from a
//! trained repeated integral field.

pub mod convolution;
pub mod error;
pub mod fields;
pub mod integral_training;
pub mod io_formats;
pub mod kernels;
pub mod rng;
pub mod synthetic;
pub mod tensor_math;

pub use error::{Error, Result};

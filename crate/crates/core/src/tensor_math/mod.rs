//! Dense numerics shared by kernel fitting and field training: a Swish MLP
//! with hand-written backpropagation, and the Adam optimizer.

mod adam;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{gradient_check, swish, swish_derivative, Activation, Gradients, Layer, Mlp, Trace};

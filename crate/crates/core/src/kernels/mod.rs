//! Piecewise-polynomial kernels represented by the Diracs of their repeated
//! derivative, together with the ramp basis that reconstructs them.

mod fit;
mod minimal;
mod mixture;
mod target;

pub use fit::{fit_kernel, fit_kernel_with_progress, FitConfig, FittedKernel};
pub use minimal::{minimal_kernel, BSplineKernel};
pub use mixture::{
    differentiate_to_diracs, kernel_eval, prune, ramp_eval, separable_product, transform_kernel,
    Dirac, DiracMixture, MixtureKernel, TransformSpec,
};
pub use target::{TargetKernel, TargetShape};

/// A kernel that can be point-evaluated and has a bounded support box.
pub trait ContinuousKernel: Sync {
    fn dim(&self) -> usize;

    /// Lower and upper corners of a box outside of which the kernel is zero
    /// (or negligible).
    fn support(&self) -> (Vec<f64>, Vec<f64>);

    fn eval(&self, x: &[f64]) -> f64;

    /// Box that kernel fitting maps onto its canonical domain `[-0.5, 0.5]^d`.
    fn frame(&self) -> (Vec<f64>, Vec<f64>) {
        self.support()
    }

    fn support_volume(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.iter().zip(&hi).map(|(l, h)| h - l).product()
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

use serde::Serialize;

use super::{convolve_grid, metrics, reference_grid, GridOptions, Metrics, Sampling};
use crate::error::{Error, Result};
use crate::fields::{GridField, IntegralField, SignalField};
use crate::kernels::{ContinuousKernel, DiracMixture};

/// Sparse convolution and Monte Carlo at the same number of signal
/// evaluations per pixel, both scored against a converged reference.
#[derive(Debug, Clone, Serialize)]
pub struct EqualEffortReport {
    /// Field evaluations per pixel of the sparse method (the Dirac count).
    pub evaluations_per_pixel: usize,
    /// Signal samples per pixel of the equal-effort Monte Carlo estimate.
    pub mc_samples: usize,
    pub reference_samples: usize,
    pub sparse: Metrics,
    pub monte_carlo: Metrics,
}

/// Outputs of [`equal_effort`], kept for inspection or export.
#[derive(Debug, Clone)]
pub struct EqualEffortOutputs {
    pub sparse: GridField,
    pub monte_carlo: GridField,
    pub reference: GridField,
}

/// Runs the equal-effort comparison on a grid of resolution `res`.
///
/// The reference uses `reference_samples` stratified samples per pixel of the
/// continuous `target`; the equal-effort estimate uses `m.len()` uniform
/// samples. Streams are derived from `seed`.
pub fn equal_effort(
    h: &dyn IntegralField,
    m: &DiracMixture,
    signal: &SignalField,
    target: &dyn ContinuousKernel,
    res: &[usize],
    reference_samples: usize,
    seed: u64,
) -> Result<(EqualEffortReport, EqualEffortOutputs)> {
    if reference_samples < m.len() {
        return Err(Error::InvalidInput(format!(
            "reference needs at least as many samples as the kernel has Diracs ({})",
            m.len()
        )));
    }
    let sparse = convolve_grid(h, m, res, &GridOptions::default())?.output;
    let reference = reference_grid(
        signal,
        target,
        res,
        reference_samples,
        Sampling::Stratified,
        seed.wrapping_mul(2),
    )?;
    let monte_carlo = reference_grid(
        signal,
        target,
        res,
        m.len(),
        Sampling::Uniform,
        seed.wrapping_mul(2).wrapping_add(1),
    )?;
    let report = EqualEffortReport {
        evaluations_per_pixel: m.len(),
        mc_samples: m.len(),
        reference_samples,
        sparse: metrics(&sparse, &reference)?,
        monte_carlo: metrics(&monte_carlo, &reference)?,
    };
    Ok((
        report,
        EqualEffortOutputs {
            sparse,
            monte_carlo,
            reference,
        },
    ))
}

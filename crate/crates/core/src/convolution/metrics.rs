use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::GridField;

/// Error of a grid against a reference. `psnr` is `+inf` for identical grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mse: f64,
    pub psnr: f64,
    /// Largest absolute value of the reference, used as the PSNR peak.
    pub peak: f64,
}

/// Channel-mean MSE and PSNR of `a` against the reference `b`.
pub fn metrics(a: &GridField, b: &GridField) -> Result<Metrics> {
    if a.resolution() != b.resolution() || a.dout() != b.dout() {
        return Err(Error::ShapeMismatch(format!(
            "{:?}x{} vs {:?}x{}",
            a.resolution(),
            a.dout(),
            b.resolution(),
            b.dout()
        )));
    }
    let n = a.values().len() as f64;
    let mse = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n;
    let peak = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok(Metrics { mse, psnr, peak })
}

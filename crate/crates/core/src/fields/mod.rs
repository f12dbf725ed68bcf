//! Continuous signals over the unit box and their repeated antiderivatives.

mod analytic;
mod antiderivative;
mod grid;

pub use analytic::AnalyticField;
pub use antiderivative::GridAntiderivative;
pub use grid::{mirror, GridField};

use crate::error::{Error, Result};
use crate::integral_training::MlpCheckpoint;

/// Padding (in domain units) used by [`grid_repeated_antiderivative`].
pub const DEFAULT_MARGIN: f64 = 0.5;

/// A continuous map from `R^din` to `R^dout`.
#[derive(Debug, Clone)]
pub enum SignalField {
    /// Multilinear interpolation of samples, mirror-extended.
    Grid(GridField),
    Analytic(AnalyticField),
    /// A trained network, evaluated as stored (no mirroring).
    Neural(Box<MlpCheckpoint>),
}

impl SignalField {
    pub fn din(&self) -> usize {
        match self {
            SignalField::Grid(g) => g.din(),
            SignalField::Analytic(a) => a.din(),
            SignalField::Neural(n) => n.din(),
        }
    }

    pub fn dout(&self) -> usize {
        match self {
            SignalField::Grid(g) => g.dout(),
            SignalField::Analytic(a) => a.dout(),
            SignalField::Neural(n) => n.dout(),
        }
    }

    /// Unchecked evaluation; `x.len() == din`, `out.len() == dout`.
    pub fn sample_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SignalField::Grid(g) => g.sample_into(x, out),
            SignalField::Analytic(a) => {
                if a.mirrors() {
                    let m: Vec<f64> = x.iter().map(|&v| mirror(v)).collect();
                    a.eval_into(&m, out)
                } else {
                    a.eval_into(x, out)
                }
            }
            SignalField::Neural(n) => n.eval_into(x, out),
        }
    }

    pub fn as_grid(&self) -> Option<&GridField> {
        match self {
            SignalField::Grid(g) => Some(g),
            _ => None,
        }
    }
}

impl From<GridField> for SignalField {
    fn from(g: GridField) -> Self {
        SignalField::Grid(g)
    }
}

impl From<AnalyticField> for SignalField {
    fn from(a: AnalyticField) -> Self {
        SignalField::Analytic(a)
    }
}

/// Checked point evaluation.
pub fn sample(field: &SignalField, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != field.din() {
        return Err(Error::InputShape {
            expected: field.din(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample position is NaN".into()));
    }
    let mut out = vec![0.0; field.dout()];
    field.sample_into(x, &mut out);
    Ok(out)
}

/// Exact order-`n` antiderivative of a grid field along all its axes.
pub fn grid_repeated_antiderivative(field: &SignalField, n: usize) -> Result<GridAntiderivative> {
    match field {
        SignalField::Grid(g) => GridAntiderivative::new(g, n, g.din(), DEFAULT_MARGIN),
        SignalField::Analytic(a) => Err(Error::UnsupportedBackend(format!(
            "analytic field {:?} has no grid antiderivative",
            a.name()
        ))),
        SignalField::Neural(_) => Err(Error::UnsupportedBackend(
            "neural field has no grid antiderivative".into(),
        )),
    }
}

/// Checked evaluation of a grid antiderivative.
pub fn sample_antiderivative(g: &GridAntiderivative, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != g.din() {
        return Err(Error::InputShape {
            expected: g.din(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; g.dout()];
    g.sample_into(x, &mut out);
    Ok(out)
}

/// A field approximating the `order`-fold repeated antiderivative of a signal
/// along its first `kernel_dim` input axes.
pub trait IntegralField: Sync {
    fn order(&self) -> usize;
    fn kernel_dim(&self) -> usize;
    fn din(&self) -> usize;
    fn dout(&self) -> usize;

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Evaluates rows of `xs` (`din` values each) into rows of `out`.
    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) {
        for (x, o) in xs
            .chunks_exact(self.din())
            .zip(out.chunks_exact_mut(self.dout()))
        {
            self.eval_into(x, o);
        }
    }

    /// Box on which the field is meaningful.
    fn valid_box(&self) -> (Vec<f64>, Vec<f64>);
}

/// An integral field given in closed form.
pub struct AnalyticIntegralField<F> {
    pub order: usize,
    pub kernel_dim: usize,
    pub din: usize,
    pub dout: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> IntegralField for AnalyticIntegralField<F> {
    fn order(&self) -> usize {
        self.order
    }

    fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    fn din(&self) -> usize {
        self.din
    }

    fn dout(&self) -> usize {
        self.dout
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn valid_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![f64::NEG_INFINITY; self.din],
            vec![f64::INFINITY; self.din],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_sampling() {
        let f: SignalField = GridField::new(vec![2], 1, vec![0.0, 1.0]).unwrap().into();
        assert_eq!(sample(&f, &[0.5]).unwrap(), vec![0.5]);
        assert!(matches!(
            sample(&f, &[f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sample(&f, &[0.1, 0.2]),
            Err(Error::InputShape { .. })
        ));
    }

    #[test]
    fn analytic_mirroring() {
        let f: SignalField = AnalyticField::new("id", 1, 1, |x, o| o[0] = x[0]).into();
        assert!((sample(&f, &[-0.25]).unwrap()[0] - 0.25).abs() < 1e-15);
        let g: SignalField = AnalyticField::new("id", 1, 1, |x, o| o[0] = x[0])
            .unbounded()
            .into();
        assert_eq!(sample(&g, &[-0.25]).unwrap()[0], -0.25);
    }

    #[test]
    fn antiderivative_requires_grid() {
        let f: SignalField = AnalyticField::new("zero", 1, 1, |_, o| o[0] = 0.0).into();
        assert!(matches!(
            grid_repeated_antiderivative(&f, 1),
            Err(Error::UnsupportedBackend(_))
        ));
    }

    #[test]
    fn ones_integrate_to_ramp() {
        let n = 16;
        let f: SignalField = GridField::new(vec![n], 1, vec![1.0; n]).unwrap().into();
        let a = grid_repeated_antiderivative(&f, 1).unwrap();
        let lo = a.valid_box().0[0];
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let v = sample_antiderivative(&a, &[x]).unwrap()[0];
            assert!((v - (x - lo)).abs() < 1.0 / n as f64);
        }
    }

    #[test]
    fn impulse_integrates_to_step() {
        let n = 8;
        let mut v = vec![0.0; n];
        v[4] = 1.0;
        let f: SignalField = GridField::new(vec![n], 1, v).unwrap().into();
        let a = grid_repeated_antiderivative(&f, 1).unwrap();
        let h = 1.0 / n as f64;
        // The padded lattice starts inside the mirrored copy of the impulse,
        // so the running integral already holds one hat area left of it.
        let before = sample_antiderivative(&a, &[3.5 * h]).unwrap()[0];
        let after = sample_antiderivative(&a, &[5.5 * h]).unwrap()[0];
        assert_eq!(before, sample_antiderivative(&a, &[0.0]).unwrap()[0]);
        // The interpolated impulse is a hat of unit height and width 2h.
        assert!((after - before - h).abs() < 1e-15);
        assert_eq!(sample_antiderivative(&a, &[0.9]).unwrap()[0], after);
    }
}

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::IntegralField;
use crate::kernels::factorial;
use crate::tensor_math::Mlp;

/// Provenance of a trained field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub w1: f64,
    pub w2: f64,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    pub batch_size: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub final_loss: f64,
}

/// A trained repeated integral field.
///
/// The network sees inputs mapped from the domain box to `[-1, 1]` and then
/// multiplied by `input_scale`. It predicts the antiderivative of the
/// normalised signal `(f - shift) / scale`; evaluation returns `scale · net(x) + shift · Π_a x_a^n / n!`, the
/// antiderivative of the signal itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCheckpoint {
    pub mlp: Mlp,
    pub order: usize,
    pub kernel_dim: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub norm_shift: Vec<f64>,
    pub norm_scale: Vec<f64>,
    pub input_scale: f64,
    pub meta: TrainingMeta,
}

impl MlpCheckpoint {
    pub fn validate(&self) -> Result<()> {
        let din = self.mlp.input_dim();
        let dout = self.mlp.output_dim();
        if self.order == 0 || self.kernel_dim == 0 || self.kernel_dim > din {
            return Err(Error::Format(format!(
                "checkpoint order {} / kernel dim {} invalid for {din} inputs",
                self.order, self.kernel_dim
            )));
        }
        if self.domain_lo.len() != din || self.domain_hi.len() != din {
            return Err(Error::Format(
                "domain box does not match input width".into(),
            ));
        }
        if self
            .domain_lo
            .iter()
            .zip(&self.domain_hi)
            .any(|(l, h)| !(l < h && l.is_finite() && h.is_finite()))
        {
            return Err(Error::Format(
                "domain box must be non-empty and finite".into(),
            ));
        }
        if self.norm_shift.len() != dout || self.norm_scale.len() != dout {
            return Err(Error::Format(
                "normalisation does not match output width".into(),
            ));
        }
        if self.norm_scale.iter().any(|s| *s == 0.0 || !s.is_finite())
            || self.norm_shift.iter().any(|s| !s.is_finite())
        {
            return Err(Error::Format(
                "normalisation must be finite and invertible".into(),
            ));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Format("input scale must be positive".into()));
        }
        Ok(())
    }

    pub fn din(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn dout(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Maps a domain point to network input coordinates.
    pub(crate) fn map_input(&self, x: &[f64], out: &mut [f64]) {
        for a in 0..x.len() {
            out[a] = self.input_scale
                * (2.0 * (x[a] - self.domain_lo[a]) / (self.domain_hi[a] - self.domain_lo[a])
                    - 1.0);
        }
    }

    fn polynomial(&self, x: &[f64]) -> f64 {
        let n = self.order as i32;
        x[..self.kernel_dim]
            .iter()
            .map(|v| v.powi(n))
            .product::<f64>()
            / factorial(self.order).powi(self.kernel_dim as i32)
    }
}

impl IntegralField for MlpCheckpoint {
    fn order(&self) -> usize {
        self.order
    }

    fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    fn din(&self) -> usize {
        self.mlp.input_dim()
    }

    fn dout(&self) -> usize {
        self.mlp.output_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.eval_batch(x, out)
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) {
        const CHUNK: usize = 4096;
        let din = self.din();
        let dout = self.dout();
        for (xc, oc) in xs.chunks(CHUNK * din).zip(out.chunks_mut(CHUNK * dout)) {
            let rows = xc.len() / din;
            let mut inputs = Array2::zeros((rows, din));
            for (r, x) in xc.chunks_exact(din).enumerate() {
                let row = inputs.row_mut(r);
                self.map_input(x, row.into_slice().expect("standard layout"));
            }
            let y = self
                .mlp
                .forward_batch(inputs.view())
                .expect("input width checked by construction");
            for (r, (x, o)) in xc
                .chunks_exact(din)
                .zip(oc.chunks_exact_mut(dout))
                .enumerate()
            {
                let p = self.polynomial(x);
                for c in 0..dout {
                    o[c] = self.norm_scale[c] * y[(r, c)] + self.norm_shift[c] * p;
                }
            }
        }
    }

    fn valid_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.domain_lo.clone(), self.domain_hi.clone())
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{factorial, ContinuousKernel};
use crate::error::{Error, Result};

/// A single weighted impulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dirac {
    pub pos: Vec<f64>,
    pub mag: f64,
}

/// The `order`-fold derivative (per axis) of a piecewise-polynomial kernel:
/// a finite list of Diracs. Reconstructing through ramps of the same order
/// gives back the kernel itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracMixture {
    dim: usize,
    order: usize,
    diracs: Vec<Dirac>,
}

/// Axis-aligned scale followed by a shift, applied to kernel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl TransformSpec {
    pub fn scale(scale: Vec<f64>) -> Self {
        let shift = vec![0.0; scale.len()];
        Self { scale, shift }
    }

    pub fn uniform(dim: usize, s: f64) -> Self {
        Self::scale(vec![s; dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::uniform(dim, 1.0)
    }

    pub fn determinant(&self) -> f64 {
        self.scale.iter().product()
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &TransformSpec) -> TransformSpec {
        TransformSpec {
            scale: self
                .scale
                .iter()
                .zip(&inner.scale)
                .map(|(a, b)| a * b)
                .collect(),
            shift: self
                .scale
                .iter()
                .zip(&inner.shift)
                .zip(&self.shift)
                .map(|((s, t), u)| s * t + u)
                .collect(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.scale.len() != dim || self.shift.len() != dim {
            return Err(Error::InvalidTransform(format!(
                "transform has {} scale and {} shift entries for a {dim}-D kernel",
                self.scale.len(),
                self.shift.len()
            )));
        }
        if let Some(s) = self.scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidTransform(format!(
                "scale entries must be positive and finite, got {s}"
            )));
        }
        if self.shift.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTransform("shift must be finite".into()));
        }
        Ok(())
    }
}

impl DiracMixture {
    pub fn new(dim: usize, order: usize, diracs: Vec<Dirac>) -> Result<Self> {
        if dim == 0 || order == 0 {
            return Err(Error::InvalidInput(format!(
                "kernel dimension and order must be at least 1 (got dim {dim}, order {order})"
            )));
        }
        if diracs.is_empty() {
            return Err(Error::EmptyKernel);
        }
        for (i, d) in diracs.iter().enumerate() {
            if d.pos.len() != dim {
                return Err(Error::InputShape {
                    expected: dim,
                    got: d.pos.len(),
                });
            }
            if d.pos.iter().any(|p| !p.is_finite()) || !d.mag.is_finite() {
                return Err(Error::InvalidInput(format!("Dirac {i} is not finite")));
            }
        }
        Ok(Self { dim, order, diracs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn diracs(&self) -> &[Dirac] {
        &self.diracs
    }

    pub fn len(&self) -> usize {
        self.diracs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diracs.is_empty()
    }

    pub fn magnitude_sum(&self) -> f64 {
        self.diracs.iter().map(|d| d.mag).sum()
    }

    pub fn magnitude_abs_sum(&self) -> f64 {
        self.diracs.iter().map(|d| d.mag.abs()).sum()
    }

    /// Multiplies every magnitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let diracs = self
            .diracs
            .iter()
            .map(|d| Dirac {
                pos: d.pos.clone(),
                mag: d.mag * factor,
            })
            .collect();
        Self {
            diracs,
            ..self.clone()
        }
    }

    /// Concatenates the Dirac lists of two compatible mixtures.
    pub fn concat(&self, other: &DiracMixture) -> Result<Self> {
        if self.dim != other.dim || self.order != other.order {
            return Err(Error::OrderMismatch(format!(
                "cannot concatenate (dim {}, order {}) with (dim {}, order {})",
                self.dim, self.order, other.dim, other.order
            )));
        }
        let mut diracs = self.diracs.clone();
        diracs.extend(other.diracs.iter().cloned());
        Ok(Self {
            diracs,
            ..self.clone()
        })
    }

    /// Per-axis bounding box of the Dirac positions.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for d in &self.diracs {
            for a in 0..self.dim {
                lo[a] = lo[a].min(d.pos[a]);
                hi[a] = hi[a].max(d.pos[a]);
            }
        }
        (lo, hi)
    }

    /// Largest per-axis extent of the Dirac positions.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    /// Integral of the reconstructed kernel, assuming it is compact.
    pub fn mass(&self) -> f64 {
        let n = self.order as i32;
        let norm = factorial(self.order).powi(self.dim as i32);
        self.diracs
            .iter()
            .map(|d| d.mag * d.pos.iter().map(|c| (-c).powi(n)).product::<f64>())
            .sum::<f64>()
            / norm
    }

    /// Linear constraints whose null space is the set of magnitudes that make
    /// the reconstructed kernel vanish outside the Dirac bounding box.
    ///
    /// For each axis `a`, Diracs sharing all other coordinates form a group,
    /// and each group must have vanishing moments `Σ w c_a^m` for `m < order`.
    pub(crate) fn compactness_constraints(&self) -> DMatrix<f64> {
        let k = self.diracs.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for axis in 0..self.dim {
            let mut idx: Vec<usize> = (0..k).collect();
            let key = |i: usize| -> Vec<f64> {
                (0..self.dim)
                    .filter(|&b| b != axis)
                    .map(|b| self.diracs[i].pos[b])
                    .collect()
            };
            idx.sort_by(|&i, &j| {
                key(i)
                    .iter()
                    .zip(key(j).iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let same = |i: usize, j: usize| {
                key(i)
                    .iter()
                    .zip(key(j).iter())
                    .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
            };
            let mut start = 0;
            while start < k {
                let mut end = start + 1;
                while end < k && same(idx[start], idx[end]) {
                    end += 1;
                }
                for m in 0..self.order {
                    let mut row = vec![0.0; k];
                    for &i in &idx[start..end] {
                        row[i] = self.diracs[i].pos[axis].powi(m as i32);
                    }
                    rows.push(row);
                }
                start = end;
            }
        }
        DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c])
    }

    /// Relative violation of compactness: `|A w| / Σ|w|`.
    pub fn compactness_residual(&self) -> f64 {
        let a = self.compactness_constraints();
        let w = DVector::from_iterator(self.len(), self.diracs.iter().map(|d| d.mag));
        (a * w).norm() / self.magnitude_abs_sum().max(f64::MIN_POSITIVE)
    }

    /// Smallest change of magnitudes that makes the kernel exactly compact.
    pub fn project_compact(&self) -> Self {
        let a = self.compactness_constraints();
        let w = DVector::from_iterator(self.len(), self.diracs.iter().map(|d| d.mag));
        let residual = &a * &w;
        let pinv = a
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .expect("SVD with both factors");
        let corrected = &w - pinv * residual;
        let diracs = self
            .diracs
            .iter()
            .zip(corrected.iter())
            .map(|(d, &mag)| Dirac {
                pos: d.pos.clone(),
                mag,
            })
            .collect();
        Self {
            diracs,
            ..self.clone()
        }
    }
}

/// `n`-th order ramp in `d` dimensions: the `n`-fold antiderivative (per axis)
/// of the Dirac delta.
pub fn ramp_eval(n: usize, d: usize, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), d);
    if x.iter().any(|&v| v < 0.0) {
        return 0.0;
    }
    let p = (n - 1) as i32;
    x.iter().map(|v| v.powi(p)).product::<f64>() / factorial(n - 1).powi(d as i32)
}

/// Reconstructs the piecewise-polynomial kernel as a sum of shifted ramps.
pub fn kernel_eval(m: &DiracMixture, x: &[f64]) -> f64 {
    let mut shifted = vec![0.0; m.dim];
    m.diracs
        .iter()
        .map(|d| {
            for a in 0..m.dim {
                shifted[a] = x[a] - d.pos[a];
            }
            d.mag * ramp_eval(m.order, m.dim, &shifted)
        })
        .sum()
}

/// The mixture already is the repeated derivative of its reconstruction, so
/// this returns its Diracs unchanged.
pub fn differentiate_to_diracs(m: &DiracMixture) -> DiracMixture {
    m.clone()
}

/// Removes Diracs with `|mag| < threshold`.
pub fn prune(m: &DiracMixture, threshold: f64) -> Result<DiracMixture> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "prune threshold must be non-negative, got {threshold}"
        )));
    }
    let diracs: Vec<Dirac> = m
        .diracs
        .iter()
        .filter(|d| d.mag.abs() >= threshold)
        .cloned()
        .collect();
    if diracs.is_empty() {
        return Err(Error::EmptyKernel);
    }
    Ok(DiracMixture {
        diracs,
        ..m.clone()
    })
}

/// Scales and shifts Dirac positions; magnitudes are divided by `det^n` so the
/// reconstructed kernel is the change of variables of the original.
pub fn transform_kernel(m: &DiracMixture, t: &TransformSpec) -> Result<DiracMixture> {
    t.validate(m.dim)?;
    let factor = t.determinant().powi(m.order as i32);
    let diracs = m
        .diracs
        .iter()
        .map(|d| Dirac {
            pos: d
                .pos
                .iter()
                .zip(&t.scale)
                .zip(&t.shift)
                .map(|((c, s), u)| s * c + u)
                .collect(),
            mag: d.mag / factor,
        })
        .collect();
    Ok(DiracMixture {
        diracs,
        ..m.clone()
    })
}

/// Outer product of 1-D mixtures into a separable multi-dimensional one.
pub fn separable_product(factors: &[DiracMixture]) -> Result<DiracMixture> {
    let first = factors
        .first()
        .ok_or_else(|| Error::InvalidInput("separable product of zero factors".into()))?;
    let order = first.order;
    for f in factors {
        if f.dim != 1 {
            return Err(Error::InvalidInput(format!(
                "separable factors must be 1-D, got dim {}",
                f.dim
            )));
        }
        if f.order != order {
            return Err(Error::OrderMismatch(format!(
                "factor orders differ ({} vs {})",
                order, f.order
            )));
        }
    }
    let mut diracs = vec![Dirac {
        pos: Vec::new(),
        mag: 1.0,
    }];
    for f in factors {
        diracs = diracs
            .iter()
            .flat_map(|acc| {
                f.diracs.iter().map(move |d| {
                    let mut pos = acc.pos.clone();
                    pos.push(d.pos[0]);
                    Dirac {
                        pos,
                        mag: acc.mag * d.mag,
                    }
                })
            })
            .collect();
    }
    DiracMixture::new(factors.len(), order, diracs)
}

/// The reconstructed (ramp-sum) kernel of a mixture, as a continuous kernel.
#[derive(Debug, Clone)]
pub struct MixtureKernel<'a>(pub &'a DiracMixture);

impl ContinuousKernel for MixtureKernel<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        self.0.bounds()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        kernel_eval(self.0, x)
    }
}

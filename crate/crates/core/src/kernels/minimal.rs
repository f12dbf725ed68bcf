use super::mixture::{Dirac, DiracMixture};
use super::{binomial, ContinuousKernel};

/// The `order`-fold self-convolution of a unit-mass box of width `width`,
/// per axis: a centred uniform B-spline of degree `order − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSplineKernel {
    pub order: usize,
    pub dim: usize,
    pub width: f64,
}

impl BSplineKernel {
    /// Cox–de Boor recursion on the knots `(k − n/2)·w`, `k = 0..=n`.
    pub fn eval_1d(&self, x: f64) -> f64 {
        let n = self.order;
        let w = self.width;
        let knots: Vec<f64> = (0..=n).map(|k| (k as f64 - n as f64 / 2.0) * w).collect();
        if x < knots[0] || x >= knots[n] {
            return 0.0;
        }
        let mut basis: Vec<f64> = (0..n)
            .map(|i| {
                if knots[i] <= x && x < knots[i + 1] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for p in 2..=n {
            for i in 0..=n - p {
                let left = (x - knots[i]) / (knots[i + p - 1] - knots[i]) * basis[i];
                let right = (knots[i + p] - x) / (knots[i + p] - knots[i + 1]) * basis[i + 1];
                basis[i] = left + right;
            }
        }
        // The cardinal B-spline integrates to w; normalise to unit mass.
        basis[0] / w
    }
}

impl ContinuousKernel for BSplineKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        let e = self.order as f64 * self.width / 2.0;
        (vec![-e; self.dim], vec![e; self.dim])
    }

    fn eval(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.eval_1d(v)).product()
    }
}

/// Minimal compact kernel of order `n`: the continuous B-spline and its
/// `(n+1)^d` Diracs (a tensor-product binomial finite-difference stencil).
pub fn minimal_kernel(n: usize, d: usize, w: f64) -> (BSplineKernel, DiracMixture) {
    assert!(n >= 1 && d >= 1 && w > 0.0 && w.is_finite());
    let taps: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (
                (k as f64 - n as f64 / 2.0) * w,
                sign * binomial(n, k) / w.powi(n as i32),
            )
        })
        .collect();
    let count = (n + 1).pow(d as u32);
    let diracs = (0..count)
        .map(|idx| {
            let mut r = idx;
            let mut pos = Vec::with_capacity(d);
            let mut mag = 1.0;
            for _ in 0..d {
                let (c, m) = taps[r % (n + 1)];
                pos.push(c);
                mag *= m;
                r /= n + 1;
            }
            Dirac { pos, mag }
        })
        .collect();
    let mixture = DiracMixture::new(d, n, diracs).expect("minimal kernel is well formed");
    (
        BSplineKernel {
            order: n,
            dim: d,
            width: w,
        },
        mixture,
    )
}

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::mixture::{transform_kernel, Dirac, DiracMixture, TransformSpec};
use super::{factorial, ContinuousKernel};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor_math::{AdamConfig, AdamState};

/// Hyperparameters of the sparse kernel fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of Diracs at initialisation.
    pub budget: usize,
    /// Weight of the `|Σ w|` compactness penalty.
    pub lambda: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub prune_interval: usize,
    /// Pruning threshold relative to the largest magnitude.
    pub prune_threshold: f64,
    pub seed: u64,
    pub lr: f64,
    /// Learning rate at the last iteration, relative to `lr` (cosine decay).
    pub final_lr_fraction: f64,
    /// Samples are drawn from the canonical support scaled by this factor.
    pub dilation: f64,
}

impl FitConfig {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            lambda: 0.1,
            iterations: 2000,
            batch_size: 4096,
            prune_interval: 500,
            prune_threshold: 1e-4,
            seed: 0,
            lr: AdamConfig::KERNEL.lr,
            final_lr_fraction: 0.01,
            dilation: 1.2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("fit config: {what}")));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.iterations == 0 || self.batch_size == 0 || self.prune_interval == 0 {
            return bad("iterations, batch size and prune interval must be positive");
        }
        if !(self.prune_threshold >= 0.0 && self.lr > 0.0 && self.dilation >= 1.0) {
            return bad("prune threshold >= 0, lr > 0 and dilation >= 1 required");
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("final lr fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Result of [`fit_kernel`].
#[derive(Debug, Clone)]
pub struct FittedKernel {
    /// Mixture approximating the target itself (not the normalised one).
    pub mixture: DiracMixture,
    /// Mean squared error against the peak-normalised target over the
    /// sampling domain.
    pub mse: f64,
    pub pruned: usize,
}

/// Integer `d`-th root, rounded down.
fn int_root(k: usize, d: usize) -> usize {
    let mut p = (k as f64).powf(1.0 / d as f64).round() as usize + 1;
    while p > 0 && p.pow(d as u32) > k {
        p -= 1;
    }
    p
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Regular grid of `floor(K^(1/d))` points per axis over `[-0.5, 0.5]^d`,
/// the remainder filled with a Halton sequence.
fn initial_positions(k: usize, d: usize) -> Vec<Vec<f64>> {
    let p = int_root(k, d).max(1);
    let coord = |i: usize| {
        if p == 1 {
            0.0
        } else {
            -0.5 + i as f64 / (p - 1) as f64
        }
    };
    let mut out: Vec<Vec<f64>> = (0..p.pow(d as u32))
        .map(|idx| {
            let mut r = idx;
            (0..d)
                .map(|_| {
                    let c = coord(r % p);
                    r /= p;
                    c
                })
                .collect()
        })
        .collect();
    let mut h = 1;
    while out.len() < k {
        out.push(
            (0..d)
                .map(|a| radical_inverse(h, PRIMES[a % PRIMES.len()]) - 0.5)
                .collect(),
        );
        h += 1;
    }
    out
}

/// Points of a midpoint lattice over `[-e, e]^d` with about 65k points.
fn evaluation_grid(d: usize, e: f64) -> Vec<Vec<f64>> {
    let per = if d == 1 {
        8192
    } else {
        (65536f64.powf(1.0 / d as f64).round() as usize).max(8)
    };
    let h = 2.0 * e / per as f64;
    (0..per.pow(d as u32))
        .map(|idx| {
            let mut r = idx;
            (0..d)
                .map(|_| {
                    let c = -e + ((r % per) as f64 + 0.5) * h;
                    r /= per;
                    c
                })
                .collect()
        })
        .collect()
}

/// Ramp values (and, for 1-D, their position derivatives) at a batch of
/// points: row `b`, column `i` holds `r(x_b - c_i)`.
fn design(
    xs: &[f64],
    d: usize,
    n: usize,
    positions: &[Vec<f64>],
    with_derivative: bool,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let rows = xs.len() / d;
    let inv = 1.0 / factorial(n - 1).powi(d as i32);
    let p = (n - 1) as i32;
    let mut a = DMatrix::zeros(rows, positions.len());
    let mut dr = with_derivative.then(|| DMatrix::zeros(rows, positions.len()));
    let inv_d = if n >= 2 { 1.0 / factorial(n - 2) } else { 0.0 };
    for (b, x) in xs.chunks_exact(d).enumerate() {
        for (i, c) in positions.iter().enumerate() {
            let mut r = inv;
            for a_ in 0..d {
                let u = x[a_] - c[a_];
                if u < 0.0 {
                    r = 0.0;
                    break;
                }
                r *= u.powi(p);
            }
            a[(b, i)] = r;
            if let Some(dr) = dr.as_mut() {
                let u = x[0] - c[0];
                if u >= 0.0 {
                    dr[(b, i)] = -u.powi(p - 1) * inv_d;
                }
            }
        }
    }
    (a, dr)
}

/// Minimises `|A w - t|² / B` subject to `C w = 0`; returns the magnitudes
/// and the constraint multipliers.
fn solve_magnitudes(
    a: &DMatrix<f64>,
    t: &DVector<f64>,
    c: Option<&DMatrix<f64>>,
) -> (DVector<f64>, DVector<f64>) {
    let k = a.ncols();
    let scale = 2.0 / a.nrows() as f64;
    let gram = a.tr_mul(a) * scale;
    let rhs_w = a.tr_mul(t) * scale;
    let r = c.map_or(0, |c| c.nrows());
    let mut kkt = DMatrix::zeros(k + r, k + r);
    kkt.view_mut((0, 0), (k, k)).copy_from(&gram);
    let mut rhs = DVector::zeros(k + r);
    rhs.rows_mut(0, k).copy_from(&rhs_w);
    if let Some(c) = c {
        kkt.view_mut((k, 0), (r, k)).copy_from(c);
        kkt.view_mut((0, k), (k, r)).copy_from(&c.transpose());
    }
    let max = kkt.amax();
    let sol = kkt
        .svd(true, true)
        .solve(&rhs, 1e-13 * max)
        .expect("SVD with both factors");
    (sol.rows(0, k).into_owned(), sol.rows(k, r).into_owned())
}

fn to_mixture(d: usize, n: usize, positions: &[Vec<f64>], mags: &[f64]) -> Result<DiracMixture> {
    let diracs = positions
        .iter()
        .zip(mags)
        .map(|(p, &mag)| Dirac {
            pos: p.clone(),
            mag,
        })
        .collect();
    DiracMixture::new(d, n, diracs)
}

/// Magnitudes for fixed positions over a point set; compactness is enforced
/// exactly when `compact` is set.
fn fit_magnitudes(
    xs: &[f64],
    ts: &DVector<f64>,
    d: usize,
    n: usize,
    positions: &[Vec<f64>],
    compact: bool,
    with_derivative: bool,
) -> Result<(
    DMatrix<f64>,
    Option<DMatrix<f64>>,
    DVector<f64>,
    DVector<f64>,
)> {
    let (a, dr) = design(xs, d, n, positions, with_derivative);
    let c = if compact {
        Some(to_mixture(d, n, positions, &vec![0.0; positions.len()])?.compactness_constraints())
    } else {
        None
    };
    let (w, nu) = solve_magnitudes(&a, ts, c.as_ref());
    Ok((a, dr, w, nu))
}

/// 1-D loss with magnitudes eliminated, and its gradient with respect to the
/// positions (envelope theorem, including the constraint multipliers).
fn reduced_objective(
    xs: &[f64],
    ts: &DVector<f64>,
    n: usize,
    positions: &[Vec<f64>],
    compact: bool,
) -> Result<(f64, Vec<f64>, DVector<f64>)> {
    let b = xs.len() as f64;
    let (a, dr, w, nu) = fit_magnitudes(xs, ts, 1, n, positions, compact, true)?;
    let dr = dr.expect("derivative requested");
    let residual = &a * &w - ts;
    let loss = residual.norm_squared() / b;
    let data = dr.tr_mul(&residual) * (2.0 / b);
    let grad = (0..positions.len())
        .map(|i| {
            let c = positions[i][0];
            let constraint: f64 = (1..nu.len())
                .map(|m| nu[m] * m as f64 * c.powi(m as i32 - 1))
                .sum();
            w[i] * (data[i] + constraint)
        })
        .collect();
    Ok((loss, grad, w))
}

/// Indices of magnitudes at or above `relative · max|w|`.
fn survivors(w: &DVector<f64>, relative: f64) -> Vec<usize> {
    let thr = relative * w.amax();
    (0..w.len())
        .filter(|&i| w[i].abs() >= thr && w[i] != 0.0)
        .collect()
}

/// Fits a sparse Dirac mixture of order `n` to `target`.
///
/// The target's [`ContinuousKernel::frame`] is mapped onto the canonical
/// domain `[-0.5, 0.5]^d`, the fit runs there, and the result is mapped back
/// with the transformation law.
///
/// Diracs start on a regular grid. For given positions the magnitudes are the
/// exact least-squares optimum; any positive `lambda` turns the `|Σ w|`
/// penalty into the hard constraint that the kernel vanish outside its Diracs.
/// Positions are optimised with Adam in 1-D for `n >= 2`; elsewhere the sample
/// gradient is zero almost everywhere (`n = 1`) or the grid alignment that
/// compactness relies on is kept. Small magnitudes are pruned at regular
/// intervals.
///
/// The optimisation runs against the target divided by its peak value and
/// reports that MSE; the returned mixture is rescaled to the target itself.
pub fn fit_kernel<K: ContinuousKernel + ?Sized>(
    target: &K,
    n: usize,
    cfg: &FitConfig,
) -> Result<FittedKernel> {
    fit_kernel_with_progress(target, n, cfg, &mut |_, _| {})
}

/// [`fit_kernel`] with a callback receiving `(iteration, loss)` every
/// prune interval.
pub fn fit_kernel_with_progress<K: ContinuousKernel + ?Sized>(
    target: &K,
    n: usize,
    cfg: &FitConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<FittedKernel> {
    cfg.validate()?;
    let d = target.dim();
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(
            "order and dimension must be at least 1".into(),
        ));
    }
    let required = (n + 1).pow(d as u32);
    if cfg.budget < required {
        return Err(Error::InfeasibleBudget {
            budget: cfg.budget,
            order: n,
            dim: d,
            required,
        });
    }
    let (lo, hi) = target.frame();
    let frame = TransformSpec {
        scale: lo.iter().zip(&hi).map(|(l, h)| h - l).collect(),
        shift: lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect(),
    };
    if !frame.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target frame must have positive extent, got {lo:?}..{hi:?}"
        )));
    }
    let mut x = vec![0.0; d];
    let mut canonical = |y: &[f64]| -> f64 {
        for (a, v) in x.iter_mut().enumerate() {
            *v = frame.shift[a] + frame.scale[a] * y[a];
        }
        target.eval(&x)
    };

    let half = 0.5 * cfg.dilation;
    let grid: Vec<f64> = evaluation_grid(d, half).into_iter().flatten().collect();
    let grid_values: Vec<f64> = grid.chunks_exact(d).map(&mut canonical).collect();
    let peak = grid_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidInput(
            "target kernel vanishes on the canonical support".into(),
        ));
    }
    let grid_targets =
        DVector::from_iterator(grid_values.len(), grid_values.iter().map(|v| v / peak));
    let compact = cfg.lambda > 0.0;
    let mut positions = initial_positions(cfg.budget, d);
    let initial = positions.len();

    if d == 1 && n >= 2 {
        let mut adam = AdamState::new(positions.len(), AdamConfig::KERNEL.with_lr(cfg.lr));
        let mut rng = seeded(cfg.seed, 0);
        let mut xs = vec![0.0; cfg.batch_size];
        let mut ts = DVector::zeros(cfg.batch_size);
        for it in 0..cfg.iterations {
            for (b, x) in xs.iter_mut().enumerate() {
                *x = rng.random_range(-half..half);
                ts[b] = canonical(std::slice::from_ref(x)) / peak;
            }
            let (loss, grad, w) = reduced_objective(&xs, &ts, n, &positions, compact)?;
            if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    stage: "kernel fit".into(),
                    iteration: it,
                });
            }
            let mut flat: Vec<f64> = positions.iter().map(|p| p[0]).collect();
            let t = it as f64 / cfg.iterations as f64;
            let f = cfg.final_lr_fraction;
            let lr = cfg.lr * (f + (1.0 - f) * 0.5 * (1.0 + (PI * t).cos()));
            adam.step_with_lr(&mut [&mut flat], &[&grad], lr);
            for (p, v) in positions.iter_mut().zip(flat) {
                p[0] = v;
            }
            if (it + 1) % cfg.prune_interval == 0 {
                progress(it + 1, loss);
                let keep = survivors(&w, cfg.prune_threshold);
                if keep.is_empty() {
                    return Err(Error::EmptyKernel);
                }
                if keep.len() < positions.len() && it + 1 < cfg.iterations {
                    positions = keep.iter().map(|&i| positions[i].clone()).collect();
                    adam.retain_indices(&keep);
                }
            }
        }
    }

    // Final magnitudes on the deterministic grid, re-solved after pruning.
    let mut solved = fit_magnitudes(&grid, &grid_targets, d, n, &positions, compact, false)?;
    loop {
        let keep = survivors(&solved.2, cfg.prune_threshold);
        if keep.is_empty() {
            return Err(Error::EmptyKernel);
        }
        if keep.len() == positions.len() {
            break;
        }
        positions = keep.iter().map(|&i| positions[i].clone()).collect();
        solved = fit_magnitudes(&grid, &grid_targets, d, n, &positions, compact, false)?;
    }
    let (a, _, w, _) = solved;
    let mse = (&a * &w - &grid_targets).norm_squared() / grid_targets.len() as f64;
    if !mse.is_finite() {
        return Err(Error::Divergence {
            stage: "kernel fit".into(),
            iteration: cfg.iterations,
        });
    }
    // Mapping back divides by det; the fit approximated target / peak.
    let gain = peak * frame.determinant();
    let mags: Vec<f64> = w.iter().map(|v| v * gain).collect();
    let mixture = transform_kernel(&to_mixture(d, n, &positions, &mags)?, &frame)?;
    Ok(FittedKernel {
        pruned: initial - mixture.len(),
        mixture,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_eval, TargetKernel};

    #[test]
    fn grid_initialisation() {
        let p = initial_positions(3, 1);
        assert_eq!(p, vec![vec![-0.5], vec![0.0], vec![0.5]]);
        let p = initial_positions(10, 2);
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], vec![-0.5, -0.5]);
        assert_eq!(p[8], vec![0.5, 0.5]);
        assert!(p[9].iter().all(|c| c.abs() < 0.5));
        assert_eq!(int_root(169, 2), 13);
        assert_eq!(int_root(168, 2), 12);
        assert_eq!(int_root(27, 3), 3);
    }

    #[test]
    fn infeasible_budget() {
        let g = TargetKernel::gaussian(0.1, 1).unwrap();
        assert!(matches!(
            fit_kernel(&g, 2, &FitConfig::new(2)),
            Err(Error::InfeasibleBudget { required: 3, .. })
        ));
        let g2 = TargetKernel::gaussian(0.1, 2).unwrap();
        assert!(matches!(
            fit_kernel(&g2, 1, &FitConfig::new(3)),
            Err(Error::InfeasibleBudget { required: 4, .. })
        ));
    }

    #[test]
    fn box_fit_recovers_edges() {
        let b = TargetKernel::box_kernel(1.0, 1).unwrap();
        let cfg = FitConfig {
            iterations: 2000,
            ..FitConfig::new(2)
        };
        let fit = fit_kernel(&b, 1, &cfg).unwrap();
        assert!(fit.mse < 1e-6, "mse {}", fit.mse);
        let d = fit.mixture.diracs();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].pos, vec![-0.5]);
        assert!((d[0].mag - 1.0).abs() < 1e-3);
        assert!((d[1].mag + 1.0).abs() < 1e-3);
    }

    #[test]
    fn narrow_box_fit_lands_on_its_edges() {
        let b = TargetKernel::box_kernel(0.2, 1).unwrap();
        let fit = fit_kernel(&b, 1, &FitConfig::new(2)).unwrap();
        assert!(fit.mse < 1e-6, "mse {}", fit.mse);
        let d = fit.mixture.diracs();
        assert!((d[0].pos[0] + 0.1).abs() < 1e-12 && (d[1].pos[0] - 0.1).abs() < 1e-12);
        assert!((d[0].mag - 5.0).abs() < 5e-3 && (d[1].mag + 5.0).abs() < 5e-3);
        assert!((kernel_eval(&fit.mixture, &[0.05]) - 5.0).abs() < 5e-3);
        assert_eq!(kernel_eval(&fit.mixture, &[0.15]), 0.0);
    }

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let xs: Vec<f64> = (0..300).map(|i| -0.6 + i as f64 * 0.004 + 0.001).collect();
        let ts = DVector::from_iterator(xs.len(), xs.iter().map(|x| (-x * x * 50.0).exp()));
        for (n, compact) in [(2, true), (2, false), (3, true)] {
            let pos: Vec<Vec<f64>> = [-0.31, -0.12, 0.02, 0.17, 0.33]
                .iter()
                .map(|&c| vec![c])
                .collect();
            let (_, g, _) = reduced_objective(&xs, &ts, n, &pos, compact).unwrap();
            for k in 0..pos.len() {
                let h = 1e-6;
                let mut plus = pos.clone();
                plus[k][0] += h;
                let mut minus = pos.clone();
                minus[k][0] -= h;
                let fd = (reduced_objective(&xs, &ts, n, &plus, compact).unwrap().0
                    - reduced_objective(&xs, &ts, n, &minus, compact).unwrap().0)
                    / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-4 * (1e-3 + fd.abs()),
                    "n={n} {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn fitted_gaussian_is_compact_and_deterministic() {
        let g = TargetKernel::gaussian(0.1, 1).unwrap();
        let cfg = FitConfig {
            iterations: 1000,
            batch_size: 1024,
            ..FitConfig::new(7)
        };
        let a = fit_kernel(&g, 2, &cfg).unwrap();
        let b = fit_kernel(&g, 2, &cfg).unwrap();
        assert_eq!(a.mixture, b.mixture);
        let m = &a.mixture;
        assert!(m.magnitude_sum().abs() < 1e-3 * m.magnitude_abs_sum());
        assert!(kernel_eval(m, &[3.0]).abs() < 1e-8);
        assert!((m.mass() - 1.0).abs() < 0.05, "mass {}", m.mass());
    }
}

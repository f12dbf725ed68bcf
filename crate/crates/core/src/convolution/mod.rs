//! Sparse convolution of integral fields with Dirac mixtures, its Monte Carlo
//! reference, and image metrics.

mod bench;
mod metrics;
mod monte_carlo;

pub use bench::{equal_effort, EqualEffortOutputs, EqualEffortReport};
pub use metrics::{metrics, Metrics};
pub use monte_carlo::{
    mc_convolve, mc_convolve_into, reference_grid, stratified_offsets, Sampling,
};

pub use crate::kernels::TransformSpec;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{GridField, IntegralField, SignalField};
use crate::kernels::{transform_kernel, DiracMixture, MixtureKernel};
use crate::rng::seeded;

/// Largest per-axis Dirac extent below which the Monte Carlo fallback is used.
pub const FALLBACK_THRESHOLD: f64 = 0.0125;
/// Samples per output point in the Monte Carlo fallback.
pub const FALLBACK_SAMPLES: usize = 256;

fn check_compatible(h: &dyn IntegralField, m: &DiracMixture) -> Result<()> {
    if m.order() != h.order() {
        return Err(Error::Incompatible(format!(
            "kernel order {} but field order {}",
            m.order(),
            h.order()
        )));
    }
    if m.dim() != h.kernel_dim() {
        return Err(Error::Incompatible(format!(
            "kernel dimension {} but field integrates along {} axes",
            m.dim(),
            h.kernel_dim()
        )));
    }
    Ok(())
}

/// `Σ_i w_i h(x - c_i)`, with each Dirac position offsetting the first
/// `m.dim()` coordinates of `x`. Uses exactly `K` field evaluations.
pub fn convolve_at(h: &dyn IntegralField, m: &DiracMixture, x: &[f64]) -> Result<Vec<f64>> {
    check_compatible(h, m)?;
    if x.len() != h.din() {
        return Err(Error::InputShape {
            expected: h.din(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; h.dout()];
    let mut tmp = vec![0.0; h.dout()];
    let mut p = x.to_vec();
    for d in m.diracs() {
        for (a, c) in d.pos.iter().enumerate() {
            p[a] = x[a] - c;
        }
        h.eval_into(&p, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += d.mag * v;
        }
    }
    Ok(out)
}

/// Per-location kernel scale driven by an auxiliary single-channel grid:
/// `clamp(offset + gain · aux(x), s_min, s_max)`, applied to every kernel axis.
#[derive(Debug, Clone)]
pub struct ScaleMap {
    pub aux: GridField,
    pub offset: f64,
    pub gain: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl ScaleMap {
    pub fn new(aux: GridField, offset: f64, gain: f64, s_min: f64, s_max: f64) -> Result<Self> {
        if aux.dout() != 1 {
            return Err(Error::InvalidInput(format!(
                "scale map needs one channel, got {}",
                aux.dout()
            )));
        }
        if !(s_min > 0.0 && s_min <= s_max && s_max.is_finite()) {
            return Err(Error::InvalidTransform(format!(
                "scale range must satisfy 0 < s_min <= s_max, got {s_min}:{s_max}"
            )));
        }
        if !(offset.is_finite() && gain.is_finite()) {
            return Err(Error::InvalidInput(
                "scale map mapping must be finite".into(),
            ));
        }
        Ok(Self {
            aux,
            offset,
            gain,
            s_min,
            s_max,
        })
    }

    /// Maps the auxiliary value range linearly onto `[s_min, s_max]`.
    pub fn from_range(aux: GridField, s_min: f64, s_max: f64) -> Result<Self> {
        let lo = aux.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = aux
            .values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let gain = if hi > lo {
            (s_max - s_min) / (hi - lo)
        } else {
            0.0
        };
        Self::new(aux, s_min - gain * lo, gain, s_min, s_max)
    }

    /// A map with the same scale everywhere.
    pub fn uniform(din: usize, s: f64) -> Result<Self> {
        let aux = GridField::new(vec![1; din], 1, vec![0.0])?;
        Self::new(aux, s, 0.0, s, s)
    }

    pub fn scale_at(&self, x: &[f64]) -> f64 {
        let mut v = [0.0];
        self.aux.sample_into(x, &mut v);
        (self.offset + self.gain * v[0]).clamp(self.s_min, self.s_max)
    }
}

/// Options for [`convolve_grid`].
#[derive(Debug, Clone, Copy)]
pub struct GridOptions<'a> {
    pub scale_map: Option<&'a ScaleMap>,
    /// Signal used by the Monte Carlo fallback for tiny kernels; without it
    /// every location uses the sparse evaluation.
    pub fallback_signal: Option<&'a SignalField>,
    pub fallback_threshold: f64,
    pub fallback_samples: usize,
    pub seed: u64,
}

impl Default for GridOptions<'_> {
    fn default() -> Self {
        Self {
            scale_map: None,
            fallback_signal: None,
            fallback_threshold: FALLBACK_THRESHOLD,
            fallback_samples: FALLBACK_SAMPLES,
            seed: 0,
        }
    }
}

/// Evaluation statistics of [`convolve_grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolutionStats {
    pub pixels: usize,
    /// Integral-field evaluations in total.
    pub field_evaluations: usize,
    /// Integral-field evaluations per sparse pixel (min, max).
    pub evaluations_per_pixel: (usize, usize),
    pub fallback_pixels: usize,
    /// Signal evaluations spent by the fallback.
    pub fallback_evaluations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ConvolutionResult {
    pub output: GridField,
    pub stats: ConvolutionStats,
}

fn pixel_center(idx: usize, res: &[usize], x: &mut [f64]) {
    let mut r = idx;
    for (a, &n) in res.iter().enumerate() {
        x[a] = ((r % n) as f64 + 0.5) / n as f64;
        r /= n;
    }
}

/// Checks that every tap of `m` (scaled by up to `max_scale`) around the unit
/// box stays inside the field's valid box.
fn check_reach(h: &dyn IntegralField, m: &DiracMixture, max_scale: f64) -> Result<()> {
    let (lo, hi) = m.bounds();
    let (vlo, vhi) = h.valid_box();
    let tol = 1e-9;
    for a in 0..m.dim() {
        let need_lo = -hi[a].max(0.0) * max_scale;
        let need_hi = 1.0 - lo[a].min(0.0) * max_scale;
        if need_lo < vlo[a] - tol || need_hi > vhi[a] + tol {
            return Err(Error::Incompatible(format!(
                "kernel reaches [{need_lo:.4}, {need_hi:.4}] on axis {a} but the field is valid on [{:.4}, {:.4}]",
                vlo[a], vhi[a]
            )));
        }
    }
    Ok(())
}

/// Convolves at every sample centre of a grid of resolution `res`.
///
/// With a scale map, each location uses the kernel scaled by the local scale.
/// Locations whose kernel extent drops below the fallback threshold are
/// estimated by stratified Monte Carlo on the signal, when one is given.
pub fn convolve_grid(
    h: &dyn IntegralField,
    m: &DiracMixture,
    res: &[usize],
    opts: &GridOptions<'_>,
) -> Result<ConvolutionResult> {
    let start = Instant::now();
    check_compatible(h, m)?;
    let din = h.din();
    let dout = h.dout();
    if res.len() != din || res.contains(&0) {
        return Err(Error::InputShape {
            expected: din,
            got: res.len(),
        });
    }
    if let Some(sm) = opts.scale_map {
        if sm.aux.din() != din {
            return Err(Error::InputShape {
                expected: din,
                got: sm.aux.din(),
            });
        }
    }
    if let Some(f) = opts.fallback_signal {
        if f.din() != din || f.dout() != dout {
            return Err(Error::Incompatible(
                "fallback signal shape differs from the integral field".into(),
            ));
        }
    }
    check_reach(h, m, opts.scale_map.map_or(1.0, |s| s.s_max))?;

    let row = res[0];
    let pixels: usize = res.iter().product();
    let mut values = vec![0.0; pixels * dout];
    let k = m.dim();
    let base_extent = m.extent();

    let row_stats: Vec<(usize, usize, usize, usize, usize)> = values
        .par_chunks_mut(row * dout)
        .enumerate()
        .map(|(r, out)| {
            let mut xs = Vec::new();
            let mut weights = Vec::new();
            let mut owners = Vec::new();
            let mut x = vec![0.0; din];
            let (mut evals, mut min_k, mut max_k, mut fb, mut fb_evals) = (0, usize::MAX, 0, 0, 0);
            for i in 0..row {
                let idx = r * row + i;
                pixel_center(idx, res, &mut x);
                let scale = opts.scale_map.map(|s| s.scale_at(&x));
                let extent = base_extent * scale.unwrap_or(1.0);
                let kernel = match scale {
                    Some(s) if s != 1.0 => transform_kernel(m, &TransformSpec::uniform(k, s))
                        .expect("scale map yields positive scales"),
                    _ => m.clone(),
                };
                if let (Some(f), true) = (opts.fallback_signal, extent < opts.fallback_threshold) {
                    let mut rng = seeded(opts.seed, idx as u64);
                    mc_convolve_into(
                        f,
                        &MixtureKernel(&kernel),
                        &x,
                        opts.fallback_samples,
                        Sampling::Stratified,
                        &mut rng,
                        &mut out[i * dout..(i + 1) * dout],
                    );
                    fb += 1;
                    fb_evals += opts.fallback_samples;
                    continue;
                }
                for d in kernel.diracs() {
                    for a in 0..din {
                        xs.push(if a < k { x[a] - d.pos[a] } else { x[a] });
                    }
                    weights.push(d.mag);
                    owners.push(i);
                }
                min_k = min_k.min(kernel.len());
                max_k = max_k.max(kernel.len());
                evals += kernel.len();
            }
            if !weights.is_empty() {
                let mut ys = vec![0.0; weights.len() * dout];
                h.eval_batch(&xs, &mut ys);
                for ((y, w), &i) in ys.chunks_exact(dout).zip(&weights).zip(&owners) {
                    for (o, v) in out[i * dout..(i + 1) * dout].iter_mut().zip(y) {
                        *o += w * v;
                    }
                }
            }
            (evals, min_k, max_k, fb, fb_evals)
        })
        .collect();

    let mut stats = ConvolutionStats {
        pixels,
        field_evaluations: 0,
        evaluations_per_pixel: (usize::MAX, 0),
        fallback_pixels: 0,
        fallback_evaluations: 0,
        seconds: 0.0,
    };
    for (e, lo, hi, fb, fe) in row_stats {
        stats.field_evaluations += e;
        stats.evaluations_per_pixel.0 = stats.evaluations_per_pixel.0.min(lo);
        stats.evaluations_per_pixel.1 = stats.evaluations_per_pixel.1.max(hi);
        stats.fallback_pixels += fb;
        stats.fallback_evaluations += fe;
    }
    if stats.evaluations_per_pixel.0 == usize::MAX {
        stats.evaluations_per_pixel.0 = 0;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "convolution produced non-finite values".into(),
        ));
    }
    let output = GridField::new(res.to_vec(), dout, values)?;
    stats.seconds = start.elapsed().as_secs_f64();
    Ok(ConvolutionResult { output, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AnalyticIntegralField, GridAntiderivative};
    use crate::kernels::{minimal_kernel, Dirac};

    fn cubic_field() -> AnalyticIntegralField<impl Fn(&[f64], &mut [f64]) + Sync> {
        // Second antiderivative of f(x) = 1 + x: x²/2 + x³/6.
        AnalyticIntegralField {
            order: 2,
            kernel_dim: 1,
            din: 1,
            dout: 1,
            f: |x: &[f64], o: &mut [f64]| o[0] = x[0] * x[0] / 2.0 + x[0].powi(3) / 6.0,
        }
    }

    #[test]
    fn stencil_reproduces_linear_signal() {
        let h = cubic_field();
        let (_, m) = minimal_kernel(2, 1, 0.1);
        for &x in &[0.2, 0.5, 0.9] {
            let v = convolve_at(&h, &m, &[x]).unwrap()[0];
            assert!((v - (1.0 + x)).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_kernels_are_rejected() {
        let h = cubic_field();
        let (_, m1) = minimal_kernel(1, 1, 0.1);
        assert!(matches!(
            convolve_at(&h, &m1, &[0.5]),
            Err(Error::Incompatible(_))
        ));
        let (_, m2) = minimal_kernel(2, 2, 0.1);
        assert!(convolve_at(&h, &m2, &[0.5]).is_err());
    }

    #[test]
    fn linearity_in_the_mixture() {
        let h = cubic_field();
        let a = DiracMixture::new(
            1,
            2,
            vec![
                Dirac {
                    pos: vec![0.1],
                    mag: 2.0,
                },
                Dirac {
                    pos: vec![-0.3],
                    mag: -0.7,
                },
            ],
        )
        .unwrap();
        let (_, b) = minimal_kernel(2, 1, 0.2);
        let x = [0.41];
        let sum = convolve_at(&h, &a.concat(&b).unwrap(), &x).unwrap()[0];
        let parts = convolve_at(&h, &a, &x).unwrap()[0] + convolve_at(&h, &b, &x).unwrap()[0];
        assert!((sum - parts).abs() < 1e-12);
    }

    #[test]
    fn uniform_scale_map_is_bitwise_invariant() {
        let g = GridField::from_fn(vec![12, 10], 2, |x, o| {
            o[0] = (6.0 * x[0]).sin() * x[1];
            o[1] = x[0] + x[1];
        })
        .unwrap();
        let h = GridAntiderivative::new(&g, 1, 2, 0.5).unwrap();
        let (_, m) = minimal_kernel(1, 2, 0.2);
        let plain = convolve_grid(&h, &m, &[12, 10], &GridOptions::default()).unwrap();
        let sm = ScaleMap::uniform(2, 1.0).unwrap();
        let mapped = convolve_grid(
            &h,
            &m,
            &[12, 10],
            &GridOptions {
                scale_map: Some(&sm),
                ..GridOptions::default()
            },
        )
        .unwrap();
        assert_eq!(plain.output, mapped.output);
        assert_eq!(plain.stats.field_evaluations, 12 * 10 * 4);
        assert_eq!(plain.stats.evaluations_per_pixel, (4, 4));
    }

    #[test]
    fn tiny_kernels_use_the_fallback() {
        let g = GridField::from_fn(vec![16], 1, |x, o| o[0] = x[0]).unwrap();
        let f = SignalField::Grid(g.clone());
        let h = GridAntiderivative::new(&g, 1, 1, 0.5).unwrap();
        let (_, m) = minimal_kernel(1, 1, 0.5);
        let aux = GridField::from_fn(vec![16], 1, |x, o| o[0] = x[0]).unwrap();
        let sm = ScaleMap::from_range(aux, 0.01, 1.0).unwrap();
        let r = convolve_grid(
            &h,
            &m,
            &[16],
            &GridOptions {
                scale_map: Some(&sm),
                fallback_signal: Some(&f),
                ..GridOptions::default()
            },
        )
        .unwrap();
        assert!(r.stats.fallback_pixels >= 1);
        assert_eq!(
            r.stats.fallback_evaluations,
            r.stats.fallback_pixels * FALLBACK_SAMPLES
        );
        // The first pixel has scale 0.01 (extent 0.005): the fallback averages
        // the linear signal over a symmetric window, giving its centre value.
        assert!((r.output.values()[0] - 1.0 / 32.0).abs() < 1e-3);
    }

    #[test]
    fn reach_beyond_field_is_rejected() {
        let g = GridField::new(vec![4], 1, vec![1.0; 4]).unwrap();
        let h = GridAntiderivative::new(&g, 1, 1, 0.1).unwrap();
        let (_, m) = minimal_kernel(1, 1, 0.8);
        assert!(matches!(
            convolve_grid(&h, &m, &[4], &GridOptions::default()),
            Err(Error::Incompatible(_))
        ));
    }
}

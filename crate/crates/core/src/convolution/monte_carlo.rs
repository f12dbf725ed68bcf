use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{GridField, SignalField};
use crate::kernels::ContinuousKernel;
use crate::rng::seeded;

/// How Monte Carlo offsets are drawn over the kernel support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Independent uniform samples.
    Uniform,
    /// Latin hypercube: every axis has one sample per stratum.
    Stratified,
}

/// `n` points (row-major, `lo.len()` values each) in the box `[lo, hi]`.
pub fn stratified_offsets<R: Rng + ?Sized>(
    lo: &[f64],
    hi: &[f64],
    n: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Vec<f64> {
    let d = lo.len();
    let mut out = vec![0.0; n * d];
    match sampling {
        Sampling::Uniform => {
            for p in out.chunks_exact_mut(d) {
                for a in 0..d {
                    p[a] = lo[a] + (hi[a] - lo[a]) * rng.random::<f64>();
                }
            }
        }
        Sampling::Stratified => {
            let mut perm: Vec<usize> = (0..n).collect();
            for a in 0..d {
                perm.shuffle(rng);
                for (i, &s) in perm.iter().enumerate() {
                    let u = (s as f64 + rng.random::<f64>()) / n as f64;
                    out[i * d + a] = lo[a] + (hi[a] - lo[a]) * u;
                }
            }
        }
    }
    out
}

/// Monte Carlo estimate of `(f * g)(x)`: offsets `τ` are drawn over the
/// kernel's support box and `f(x - τ) g(τ) vol` is averaged. The kernel acts
/// on the first `g.dim()` coordinates.
pub fn mc_convolve_into<R: Rng + ?Sized>(
    f: &SignalField,
    g: &dyn ContinuousKernel,
    x: &[f64],
    n: usize,
    sampling: Sampling,
    rng: &mut R,
    out: &mut [f64],
) {
    let k = g.dim();
    let (lo, hi) = g.support();
    let vol = g.support_volume();
    let taus = stratified_offsets(&lo, &hi, n, sampling, rng);
    let mut p = x.to_vec();
    let mut v = vec![0.0; out.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for tau in taus.chunks_exact(k) {
        let w = g.eval(tau);
        if w == 0.0 {
            continue;
        }
        for a in 0..k {
            p[a] = x[a] - tau[a];
        }
        f.sample_into(&p, &mut v);
        for (o, s) in out.iter_mut().zip(&v) {
            *o += w * s;
        }
    }
    let scale = vol / n as f64;
    out.iter_mut().for_each(|o| *o *= scale);
}

/// Uniform Monte Carlo estimate of `(f * g)(x)` with `n` samples.
pub fn mc_convolve(
    f: &SignalField,
    g: &dyn ContinuousKernel,
    x: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least one sample".into(),
        ));
    }
    if x.len() != f.din() || g.dim() > f.din() {
        return Err(Error::InputShape {
            expected: f.din(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; f.dout()];
    let mut rng = seeded(seed, 0);
    mc_convolve_into(f, g, x, n, Sampling::Uniform, &mut rng, &mut out);
    Ok(out)
}

/// Monte Carlo convolution at every sample centre of a grid; the generator of
/// pixel `i` is stream `i` of `seed`.
pub fn reference_grid(
    f: &SignalField,
    g: &dyn ContinuousKernel,
    res: &[usize],
    n: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<GridField> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least one sample".into(),
        ));
    }
    if res.len() != f.din() || g.dim() > f.din() {
        return Err(Error::InputShape {
            expected: f.din(),
            got: res.len(),
        });
    }
    let dout = f.dout();
    let pixels: usize = res.iter().product();
    let mut values = vec![0.0; pixels * dout];
    values
        .par_chunks_mut(dout)
        .enumerate()
        .for_each(|(idx, out)| {
            let mut x = vec![0.0; res.len()];
            let mut r = idx;
            for (a, &len) in res.iter().enumerate() {
                x[a] = ((r % len) as f64 + 0.5) / len as f64;
                r /= len;
            }
            let mut rng = seeded(seed, idx as u64);
            mc_convolve_into(f, g, &x, n, sampling, &mut rng, out);
        });
    GridField::new(res.to_vec(), dout, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticField;
    use crate::kernels::TargetKernel;

    #[test]
    fn constant_signal_is_exact_for_box() {
        let f: SignalField = AnalyticField::new("c", 2, 1, |_, o| o[0] = 3.0).into();
        let g = TargetKernel::box_kernel(0.2, 2).unwrap();
        for n in [1, 7, 64] {
            let v = mc_convolve(&f, &g, &[0.5, 0.5], n, 9).unwrap()[0];
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_decays_as_one_over_n() {
        let f: SignalField =
            AnalyticField::new("s", 1, 1, |x, o| o[0] = (20.0 * x[0]).sin()).into();
        let g = TargetKernel::box_kernel(0.4, 1).unwrap();
        let var = |n: usize| {
            let vals: Vec<f64> = (0..400)
                .map(|s| mc_convolve(&f, &g, &[0.5], n, s).unwrap()[0])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
        };
        let ratio = var(16) / var(64);
        assert!((ratio - 4.0).abs() < 1.2, "ratio {ratio}");
    }

    #[test]
    fn stratified_covers_each_stratum() {
        let mut rng = seeded(1, 0);
        let p = stratified_offsets(
            &[0.0, -1.0],
            &[1.0, 1.0],
            10,
            Sampling::Stratified,
            &mut rng,
        );
        let mut bins: Vec<usize> = p.chunks_exact(2).map(|q| (q[0] * 10.0) as usize).collect();
        bins.sort();
        assert_eq!(bins, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn reference_grid_is_deterministic() {
        let f: SignalField = AnalyticField::new("s", 2, 1, |x, o| o[0] = x[0] * x[1]).into();
        let g = TargetKernel::gaussian(0.05, 2).unwrap();
        let a = reference_grid(&f, &g, &[5, 4], 3, Sampling::Uniform, 7).unwrap();
        let b = reference_grid(&f, &g, &[5, 4], 3, Sampling::Uniform, 7).unwrap();
        assert_eq!(a, b);
    }
}

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::checkpoint::{MlpCheckpoint, TrainingMeta};
use crate::convolution::{convolve_at, mc_convolve_into, stratified_offsets, Sampling};
use crate::error::{Error, Result};
use crate::fields::{IntegralField, SignalField};
use crate::kernels::{minimal_kernel, BSplineKernel, ContinuousKernel, DiracMixture};
use crate::rng::seeded;
use crate::tensor_math::{AdamConfig, AdamState, Gradients, Mlp};

/// Hyperparameters of integral-field training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Minimal-kernel width of the first phase.
    pub w1: f64,
    /// Minimal-kernel width of the fine-tuning phase.
    pub w2: f64,
    /// Monte Carlo samples of the convolved signal per position.
    pub mc_samples: usize,
    pub batch_size: usize,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    pub lr: f64,
    /// Learning rate at the end of each phase relative to `lr` (cosine decay).
    pub final_lr_fraction: f64,
    pub hidden: Vec<usize>,
    /// Padding of the training domain around the unit box along kernel axes.
    pub pad: f64,
    /// Factor applied to network inputs after mapping the domain to `[-1, 1]`.
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            w1: 0.025,
            w2: 0.0125,
            mc_samples: 32,
            batch_size: 4096,
            phase1_iterations: 10_000,
            phase2_iterations: 2_000,
            lr: AdamConfig::FIELD.lr,
            final_lr_fraction: 0.01,
            hidden: vec![256; 5],
            pad: 0.4,
            input_scale: 4.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Sets the first phase length and the second to 20% of it.
    pub fn with_iterations(mut self, phase1: usize) -> Self {
        self.phase1_iterations = phase1;
        self.phase2_iterations = phase1 / 5;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("train config: {m}")));
        if !(self.w1 > 0.0 && self.w2 > 0.0 && self.w1.is_finite()) {
            return bad("kernel widths must be positive");
        }
        if self.phase2_iterations > 0 && self.w2 >= self.w1 {
            return bad("fine-tuning width must be smaller than the first width");
        }
        if self.mc_samples == 0 || self.batch_size == 0 {
            return bad("batch size and Monte Carlo samples must be positive");
        }
        if !(self.lr > 0.0 && self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("learning rate must be positive");
        }
        if !(self.pad >= 0.0 && self.pad.is_finite()) {
            return bad("padding must be non-negative");
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad("input scale must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// The finite-difference stencil of order `n` over `d_k` axes at width `w`:
/// the Diracs of the minimal kernel.
pub fn stencil(n: usize, d_k: usize, w: f64) -> DiracMixture {
    minimal_kernel(n, d_k, w).1
}

/// Squared error (channel mean) between the stencil response of `h` at `x`
/// and an `m`-sample stratified estimate of the signal convolved with the
/// minimal kernel.
pub fn loss_at<R: Rng + ?Sized>(
    h: &dyn IntegralField,
    f: &SignalField,
    x: &[f64],
    stencil: &DiracMixture,
    kernel: &BSplineKernel,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    let s = convolve_at(h, stencil, x)?;
    let mut t = vec![0.0; f.dout()];
    mc_convolve_into(f, kernel, x, m, Sampling::Stratified, rng, &mut t);
    Ok(s.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / s.len() as f64)
}

/// Trains a network `h` whose order-`n` stencil response along the first
/// `d_k` axes matches `f` convolved with the minimal kernel.
pub fn train_integral_field(
    f: &SignalField,
    n: usize,
    d_k: usize,
    cfg: &TrainConfig,
) -> Result<MlpCheckpoint> {
    train_integral_field_with_progress(f, n, d_k, cfg, &mut |_, _, _| {})
}

/// Per-channel mean and standard deviation of `f` over the unit box.
fn signal_statistics(f: &SignalField, seed: u64) -> (Vec<f64>, Vec<f64>) {
    if let Some(g) = f.as_grid() {
        return g.channel_stats();
    }
    let n = 4096;
    let din = f.din();
    let mut rng = seeded(seed, u64::MAX);
    let pts = stratified_offsets(
        &vec![0.0; din],
        &vec![1.0; din],
        n,
        Sampling::Stratified,
        &mut rng,
    );
    let dout = f.dout();
    let mut v = vec![0.0; dout];
    let mut sum = vec![0.0; dout];
    let mut sq = vec![0.0; dout];
    for x in pts.chunks_exact(din) {
        f.sample_into(x, &mut v);
        for c in 0..dout {
            sum[c] += v[c];
            sq[c] += v[c] * v[c];
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt())
        .collect();
    (mean, std)
}

/// [`train_integral_field`] with a callback receiving
/// `(phase, iteration, loss)` every 100 iterations.
pub fn train_integral_field_with_progress(
    f: &SignalField,
    n: usize,
    d_k: usize,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(usize, usize, f64),
) -> Result<MlpCheckpoint> {
    cfg.validate()?;
    let din = f.din();
    let dout = f.dout();
    if n == 0 || d_k == 0 || d_k > din {
        return Err(Error::InvalidInput(format!(
            "order must be >= 1 and kernel dims in 1..={din}, got n={n}, d_k={d_k}"
        )));
    }
    let (mean, std) = signal_statistics(f, cfg.seed);
    let scale: Vec<f64> = std
        .iter()
        .map(|s| if *s > 1e-12 { *s } else { 1.0 })
        .collect();

    let mut widths = vec![din];
    widths.extend(&cfg.hidden);
    widths.push(dout);
    let mut init_rng = seeded(cfg.seed, 0);
    let mlp = Mlp::new(&widths, &mut init_rng)?;
    let domain_lo: Vec<f64> = (0..din)
        .map(|a| if a < d_k { -cfg.pad } else { 0.0 })
        .collect();
    let domain_hi: Vec<f64> = (0..din)
        .map(|a| if a < d_k { 1.0 + cfg.pad } else { 1.0 })
        .collect();
    let mut ckpt = MlpCheckpoint {
        mlp,
        order: n,
        kernel_dim: d_k,
        domain_lo,
        domain_hi,
        norm_shift: mean,
        norm_scale: scale,
        input_scale: cfg.input_scale,
        meta: TrainingMeta {
            w1: cfg.w1,
            w2: cfg.w2,
            phase1_iterations: cfg.phase1_iterations,
            phase2_iterations: cfg.phase2_iterations,
            batch_size: cfg.batch_size,
            mc_samples: cfg.mc_samples,
            seed: cfg.seed,
            final_loss: f64::NAN,
        },
    };

    let mut adam = AdamState::new(
        ckpt.mlp.parameter_count(),
        AdamConfig::FIELD.with_lr(cfg.lr),
    );
    let mut rng = seeded(cfg.seed, 1);
    let mut last = f64::NAN;
    for (phase, (w, iters)) in [
        (cfg.w1, cfg.phase1_iterations),
        (cfg.w2, cfg.phase2_iterations),
    ]
    .into_iter()
    .enumerate()
    {
        let (kernel, taps) = minimal_kernel(n, d_k, w);
        let reach = n as f64 * w / 2.0;
        for it in 0..iters {
            let batch = sample_batch(f, &ckpt, &kernel, reach, cfg, &mut rng);
            let (loss, grads) = batch_gradient(&ckpt, &taps, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    stage: format!("phase {}", phase + 1),
                    iteration: it,
                });
            }
            let t = it as f64 / iters as f64;
            let fr = cfg.final_lr_fraction;
            let lr = cfg.lr * (fr + (1.0 - fr) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()));
            let blocks = grads.blocks();
            adam.step_with_lr(&mut ckpt.mlp.parameters_mut(), &blocks, lr);
            last = loss;
            if (it + 1) % 100 == 0 || it + 1 == iters {
                progress(phase + 1, it + 1, loss);
            }
        }
    }
    ckpt.mlp.round_to_f32();
    ckpt.meta.final_loss = last;
    Ok(ckpt)
}

/// Positions and normalised Monte Carlo targets for one step.
struct Batch {
    xs: Vec<f64>,
    targets: Vec<f64>,
}

fn sample_batch<R: Rng + ?Sized>(
    f: &SignalField,
    ckpt: &MlpCheckpoint,
    kernel: &BSplineKernel,
    reach: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Batch {
    let din = ckpt.din();
    let dout = ckpt.dout();
    let d_k = ckpt.kernel_dim;
    let lo: Vec<f64> = (0..din)
        .map(|a| {
            if a < d_k {
                ckpt.domain_lo[a] + reach
            } else {
                0.0
            }
        })
        .collect();
    let hi: Vec<f64> = (0..din)
        .map(|a| {
            if a < d_k {
                ckpt.domain_hi[a] - reach
            } else {
                1.0
            }
        })
        .collect();
    let xs = stratified_offsets(&lo, &hi, cfg.batch_size, Sampling::Stratified, rng);
    let (klo, khi) = kernel.support();
    let taus: Vec<Vec<f64>> = (0..cfg.batch_size)
        .map(|_| stratified_offsets(&klo, &khi, cfg.mc_samples, Sampling::Stratified, rng))
        .collect();
    let vol = kernel.support_volume() / cfg.mc_samples as f64;
    let mut targets = vec![0.0; cfg.batch_size * dout];
    targets
        .par_chunks_mut(dout)
        .zip(xs.par_chunks(din))
        .zip(taus.par_iter())
        .for_each(|((t, x), tau)| {
            let mut p = x.to_vec();
            let mut v = vec![0.0; dout];
            for off in tau.chunks_exact(d_k) {
                let g = kernel.eval(off);
                for a in 0..d_k {
                    p[a] = x[a] - off[a];
                }
                f.sample_into(&p, &mut v);
                for c in 0..dout {
                    t[c] += g * v[c];
                }
            }
            for c in 0..dout {
                t[c] = (t[c] * vol - ckpt.norm_shift[c]) / ckpt.norm_scale[c];
            }
        });
    Batch { xs, targets }
}

/// Mean (over positions and channels) squared stencil residual and its
/// gradient with respect to the network parameters.
fn batch_gradient(
    ckpt: &MlpCheckpoint,
    taps: &DiracMixture,
    batch: &Batch,
) -> Result<(f64, Gradients)> {
    const CHUNK: usize = 128;
    let din = ckpt.din();
    let dout = ckpt.dout();
    let d_k = ckpt.kernel_dim;
    let k = taps.len();
    let positions = batch.xs.len() / din;
    let norm = 2.0 / (positions * dout) as f64;
    let partial: Vec<Result<(f64, Gradients)>> = batch
        .xs
        .par_chunks(CHUNK * din)
        .zip(batch.targets.par_chunks(CHUNK * dout))
        .map(|(xs, ts)| {
            let rows = xs.len() / din;
            let mut inputs = Array2::zeros((rows * k, din));
            let mut p = vec![0.0; din];
            for (b, x) in xs.chunks_exact(din).enumerate() {
                for (i, d) in taps.diracs().iter().enumerate() {
                    p.copy_from_slice(x);
                    for a in 0..d_k {
                        p[a] -= d.pos[a];
                    }
                    let mut row = inputs.row_mut(b * k + i);
                    ckpt.map_input(&p, row.as_slice_mut().expect("standard layout"));
                }
            }
            let trace = ckpt.mlp.forward_trace(inputs.view())?;
            let y = trace.output();
            let mut d_out = Array2::zeros((rows * k, dout));
            let mut sse = 0.0;
            for b in 0..rows {
                for c in 0..dout {
                    let s: f64 = (0..k)
                        .map(|i| taps.diracs()[i].mag * y[(b * k + i, c)])
                        .sum();
                    let r = s - ts[b * dout + c];
                    sse += r * r;
                    for i in 0..k {
                        d_out[(b * k + i, c)] = norm * r * taps.diracs()[i].mag;
                    }
                }
            }
            let (g, _) = ckpt.mlp.backward_batch(&trace, d_out.view())?;
            Ok((sse, g))
        })
        .collect();
    let mut total = Gradients::zeros_like(&ckpt.mlp);
    let mut sse = 0.0;
    for part in partial {
        let (s, g) = part?;
        sse += s;
        total.add_assign(&g);
    }
    Ok((sse / (positions * dout) as f64, total))
}

/// Settings of [`antiderivative_quality`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityConfig {
    pub points: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            points: 4096,
            mc_samples: 1024,
            seed: 0,
        }
    }
}

/// Channel-mean squared error, over stratified positions in the unit box,
/// between the order-`n` stencil response of `h` at width `w` and a converged
/// Monte Carlo estimate of `f` convolved with the minimal kernel of width `w`.
pub fn antiderivative_quality(
    h: &dyn IntegralField,
    f: &SignalField,
    w: f64,
    cfg: &QualityConfig,
) -> Result<f64> {
    if h.din() != f.din() || h.dout() != f.dout() {
        return Err(Error::Incompatible(
            "integral field and signal shapes differ".into(),
        ));
    }
    if !(w > 0.0) || cfg.points == 0 || cfg.mc_samples == 0 {
        return Err(Error::InvalidInput(
            "quality probe needs positive width, points and samples".into(),
        ));
    }
    let din = h.din();
    let dout = h.dout();
    let (kernel, taps) = minimal_kernel(h.order(), h.kernel_dim(), w);
    let mut rng = seeded(cfg.seed, 0);
    let xs = stratified_offsets(
        &vec![0.0; din],
        &vec![1.0; din],
        cfg.points,
        Sampling::Stratified,
        &mut rng,
    );
    let k = taps.len();
    let mut query = Vec::with_capacity(cfg.points * k * din);
    for x in xs.chunks_exact(din) {
        for d in taps.diracs() {
            for a in 0..din {
                query.push(if a < h.kernel_dim() {
                    x[a] - d.pos[a]
                } else {
                    x[a]
                });
            }
        }
    }
    let mut ys = vec![0.0; cfg.points * k * dout];
    h.eval_batch(&query, &mut ys);
    let errors: Vec<f64> = xs
        .par_chunks(din)
        .enumerate()
        .map(|(b, x)| {
            let mut rng = seeded(cfg.seed, 1 + b as u64);
            let mut t = vec![0.0; dout];
            mc_convolve_into(
                f,
                &kernel,
                x,
                cfg.mc_samples,
                Sampling::Stratified,
                &mut rng,
                &mut t,
            );
            (0..dout)
                .map(|c| {
                    let s: f64 = taps
                        .diracs()
                        .iter()
                        .enumerate()
                        .map(|(i, d)| d.mag * ys[(b * k + i) * dout + c])
                        .sum();
                    (s - t[c]).powi(2)
                })
                .sum::<f64>()
        })
        .collect();
    Ok(errors.iter().sum::<f64>() / (cfg.points * dout) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AnalyticField, AnalyticIntegralField, GridAntiderivative, GridField};
    use crate::kernels::factorial;

    #[test]
    fn stencil_taps() {
        let w = 0.1;
        let s = stencil(1, 1, w);
        let got: Vec<(f64, f64)> = s.diracs().iter().map(|d| (d.pos[0], d.mag)).collect();
        assert_eq!(got, vec![(-0.05, 10.0), (0.05, -10.0)]);
        let s = stencil(2, 2, w);
        assert_eq!(s.len(), 9);
        let w4 = w.powi(4);
        for d in s.diracs() {
            let expect = match d.pos.iter().filter(|c| c.abs() < 1e-12).count() {
                2 => 4.0,
                1 => -2.0,
                _ => 1.0,
            } / w4;
            assert!((d.mag - expect).abs() < 1e-6 * expect.abs());
        }
    }

    #[test]
    fn stencil_moments() {
        for n in 1..=3 {
            let s = stencil(n, 1, 0.37);
            for p in 0..=n {
                let moment: f64 = s
                    .diracs()
                    .iter()
                    .map(|d| d.mag * (-d.pos[0]).powi(p as i32))
                    .sum::<f64>()
                    / factorial(p);
                let expect = if p == n { 1.0 } else { 0.0 };
                assert!((moment - expect).abs() < 1e-10, "n={n} p={p}: {moment}");
            }
        }
    }

    #[test]
    fn zero_signal_and_field_give_zero_loss() {
        let f: SignalField = AnalyticField::new("0", 1, 1, |_, o| o[0] = 0.0).into();
        let h = AnalyticIntegralField {
            order: 1,
            kernel_dim: 1,
            din: 1,
            dout: 1,
            f: |_: &[f64], o: &mut [f64]| o[0] = 0.0,
        };
        let (k, s) = minimal_kernel(1, 1, 0.025);
        let mut rng = seeded(0, 0);
        assert_eq!(loss_at(&h, &f, &[0.5], &s, &k, 32, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn exact_antiderivative_of_linear_signal() {
        let a = 1.7;
        let f: SignalField = AnalyticField::new("lin", 1, 1, move |x, o| o[0] = a * x[0])
            .unbounded()
            .into();
        let h = AnalyticIntegralField {
            order: 1,
            kernel_dim: 1,
            din: 1,
            dout: 1,
            f: move |x: &[f64], o: &mut [f64]| o[0] = a * x[0] * x[0] / 2.0,
        };
        let (k, s) = minimal_kernel(1, 1, 0.05);
        let mut rng = seeded(3, 0);
        let small = loss_at(&h, &f, &[0.4], &s, &k, 4, &mut rng).unwrap();
        let large = loss_at(&h, &f, &[0.4], &s, &k, 4096, &mut rng).unwrap();
        assert!(large < 1e-12 && large <= small + 1e-15, "{small} {large}");
    }

    #[test]
    fn constant_shift_of_field_is_invisible() {
        let g = GridField::from_fn(vec![8, 8], 1, |x, o| o[0] = x[0] * x[1]).unwrap();
        let h = GridAntiderivative::new(&g, 2, 2, 0.3).unwrap();
        let shifted = AnalyticIntegralField {
            order: 2,
            kernel_dim: 2,
            din: 2,
            dout: 1,
            f: |x: &[f64], o: &mut [f64]| {
                h.sample_into(x, o);
                o[0] += 123.0;
            },
        };
        let s = stencil(2, 2, 0.05);
        for x in [[0.3, 0.4], [0.8, 0.1]] {
            let a = convolve_at(&h, &s, &x).unwrap()[0];
            let b = convolve_at(&shifted, &s, &x).unwrap()[0];
            assert!((a - b).abs() < 1e-10 * (1.0 / 0.05f64.powi(4)), "{a} {b}");
        }
    }

    #[test]
    fn oracle_quality_is_small_and_random_net_is_large() {
        let g = GridField::from_fn(vec![32, 32], 1, |x, o| {
            o[0] = (5.0 * x[0]).sin() * (3.0 * x[1]).cos()
        })
        .unwrap();
        let f = SignalField::Grid(g.clone());
        let oracle = GridAntiderivative::new(&g, 1, 2, 0.3).unwrap();
        let q = QualityConfig {
            points: 256,
            mc_samples: 1024,
            seed: 1,
        };
        let good = antiderivative_quality(&oracle, &f, 0.0125, &q).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8],
            phase1_iterations: 0,
            phase2_iterations: 0,
            ..TrainConfig::default()
        };
        let random = train_integral_field(&f, 1, 2, &cfg).unwrap();
        let bad = antiderivative_quality(&random, &f, 0.0125, &q).unwrap();
        assert!(good < 1e-5, "{good}");
        assert!(bad > 100.0 * good, "{bad} vs {good}");
    }

    #[test]
    fn constant_signal_trains_to_tiny_loss() {
        let f: SignalField = AnalyticField::new("c", 1, 1, |_, o| o[0] = 0.7).into();
        let cfg = TrainConfig {
            hidden: vec![16, 16],
            batch_size: 64,
            lr: 1e-2,
            ..TrainConfig::default().with_iterations(2000)
        };
        let ckpt = train_integral_field(&f, 1, 1, &cfg).unwrap();
        assert!(ckpt.meta.final_loss < 1e-5, "{}", ckpt.meta.final_loss);
        let again = train_integral_field(&f, 1, 1, &cfg).unwrap();
        assert_eq!(ckpt, again);
    }
}

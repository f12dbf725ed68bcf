use crate::error::{Error, Result};

/// Reflects a coordinate into `[0, 1]` (even extension, period 2).
pub fn mirror(x: f64) -> f64 {
    let t = x.abs() % 2.0;
    if t > 1.0 {
        2.0 - t
    } else {
        t
    }
}

/// Index into an axis of `res` samples after mirroring, for integer knots.
pub(crate) fn mirror_index(k: i64, res: usize) -> usize {
    let p = 2 * res as i64;
    let m = k.rem_euclid(p);
    if m >= res as i64 {
        (p - 1 - m) as usize
    } else {
        m as usize
    }
}

/// Regular grid over the unit box. Sample `i` along an axis of resolution
/// `res` sits at `(i + 0.5) / res`. Values are stored with channels
/// interleaved and axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    res: Vec<usize>,
    dout: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(res: Vec<usize>, dout: usize, values: Vec<f64>) -> Result<Self> {
        if res.is_empty() || res.contains(&0) || dout == 0 {
            return Err(Error::InvalidInput(format!(
                "grid needs positive resolution and channel count, got {res:?} x {dout}"
            )));
        }
        let expected = res.iter().product::<usize>() * dout;
        if values.len() != expected {
            return Err(Error::InputShape {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid values must be finite".into()));
        }
        Ok(Self { res, dout, values })
    }

    /// Builds a grid by evaluating `f` at every sample centre.
    pub fn from_fn(res: Vec<usize>, dout: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let count: usize = res.iter().product();
        let mut values = vec![0.0; count * dout];
        let mut x = vec![0.0; res.len()];
        for (idx, out) in values.chunks_exact_mut(dout).enumerate() {
            let mut r = idx;
            for (a, &n) in res.iter().enumerate() {
                x[a] = ((r % n) as f64 + 0.5) / n as f64;
                r /= n;
            }
            f(&x, out);
        }
        Self::new(res, dout, values)
    }

    pub fn din(&self) -> usize {
        self.res.len()
    }

    pub fn dout(&self) -> usize {
        self.dout
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat sample index of a multi-index.
    pub fn index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in (0..self.res.len()).rev() {
            flat = flat * self.res[a] + idx[a];
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> &[f64] {
        let i = self.index(idx);
        &self.values[i * self.dout..(i + 1) * self.dout]
    }

    /// Multilinear interpolation with mirror extension outside `[0, 1]^d`.
    pub fn sample_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.res.len();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut next = [0usize; 8];
        assert!(d <= 8, "grids above 8 dimensions are not supported");
        for a in 0..d {
            let n = self.res[a];
            let u = (mirror(x[a]) * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n.saturating_sub(2));
            base[a] = i;
            frac[a] = u - i as f64;
            next[a] = (i + 1).min(n - 1);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in (0..d).rev() {
                let hi = corner >> a & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.res[a] + if hi { next[a] } else { base[a] };
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[flat * self.dout..(flat + 1) * self.dout];
            for (o, vv) in out.iter_mut().zip(v) {
                *o += w * vv;
            }
        }
    }

    /// Per-channel mean and standard deviation.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dout];
        for px in self.values.chunks_exact(self.dout) {
            for (m, v) in mean.iter_mut().zip(px) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.dout];
        for px in self.values.chunks_exact(self.dout) {
            for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        (mean, var.into_iter().map(f64::sqrt).collect())
    }

    /// Order-`n` repeated inclusive prefix sums along every axis, each pass
    /// scaled by the cell size (a discrete summed-area table).
    pub fn repeated_prefix_sum(&self, n: usize) -> GridField {
        self.map_axes(n, |line, h| {
            let mut acc = 0.0;
            for v in line.iter_mut() {
                acc += *v * h;
                *v = acc;
            }
        })
    }

    /// Order-`n` backward differences along every axis, each divided by the
    /// cell size; the inverse of [`GridField::repeated_prefix_sum`].
    pub fn backward_difference(&self, n: usize) -> GridField {
        self.map_axes(n, |line, h| {
            for i in (1..line.len()).rev() {
                line[i] = (line[i] - line[i - 1]) / h;
            }
            line[0] /= h;
        })
    }

    fn map_axes(&self, n: usize, pass: impl Fn(&mut [f64], f64)) -> GridField {
        let mut values = self.values.clone();
        let d = self.res.len();
        let mut line = Vec::new();
        for a in 0..d {
            let len = self.res[a];
            let h = 1.0 / len as f64;
            let stride: usize = self.res[..a].iter().product::<usize>() * self.dout;
            let outer = values.len() / (len * stride);
            for _ in 0..n {
                for o in 0..outer {
                    for inner in 0..stride {
                        let start = o * len * stride + inner;
                        line.clear();
                        line.extend((0..len).map(|i| values[start + i * stride]));
                        pass(&mut line, h);
                        for (i, v) in line.iter().enumerate() {
                            values[start + i * stride] = *v;
                        }
                    }
                }
            }
        }
        GridField {
            res: self.res.clone(),
            dout: self.dout,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid() {
        let g = GridField::new(vec![4, 3], 1, vec![5.0; 12]).unwrap();
        let mut out = [0.0];
        for x in [[0.1, 0.9], [-0.3, 1.4], [0.5, 0.5]] {
            g.sample_into(&x, &mut out);
            assert!((out[0] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_interpolation_between_nodes() {
        let g = GridField::new(vec![2], 1, vec![0.0, 1.0]).unwrap();
        let mut out = [0.0];
        g.sample_into(&[0.5], &mut out);
        assert!((out[0] - 0.5).abs() < 1e-12);
        g.sample_into(&[0.25], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn mirror_extension() {
        let g = GridField::from_fn(vec![8], 1, |x, o| o[0] = (5.0 * x[0]).sin()).unwrap();
        let (mut a, mut b) = ([0.0], [0.0]);
        for x in [0.1, 0.03, 0.27] {
            g.sample_into(&[-x], &mut a);
            g.sample_into(&[x], &mut b);
            assert!((a[0] - b[0]).abs() < 1e-12);
            g.sample_into(&[1.0 + x], &mut a);
            g.sample_into(&[1.0 - x], &mut b);
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        assert_eq!(mirror(-0.1), 0.1);
        assert!((mirror(2.3) - 0.3).abs() < 1e-12);
        assert_eq!(mirror_index(-1, 4), 0);
        assert_eq!(mirror_index(4, 4), 3);
        assert_eq!(mirror_index(-5, 4), 3);
    }

    #[test]
    fn continuity_across_cells() {
        let g = GridField::from_fn(vec![5, 7], 2, |x, o| {
            o[0] = x[0] * x[1];
            o[1] = (x[0] - x[1]).cos();
        })
        .unwrap();
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        let face = 2.5 / 5.0;
        g.sample_into(&[face - 1e-13, 0.37], &mut a);
        g.sample_into(&[face + 1e-13, 0.37], &mut b);
        for c in 0..2 {
            assert!((a[c] - b[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_sum_round_trip() {
        let g = GridField::from_fn(vec![9, 6], 2, |x, o| {
            o[0] = (13.0 * x[0]).sin() + x[1];
            o[1] = (x[0] * 40.0).floor() - 3.0 * x[1];
        })
        .unwrap();
        for n in 1..=3 {
            let back = g.repeated_prefix_sum(n).backward_difference(n);
            for (a, b) in back.values().iter().zip(g.values()) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn prefix_sum_of_ones_is_a_ramp() {
        let n = 16;
        let g = GridField::new(vec![n], 1, vec![1.0; n]).unwrap();
        let p = g.repeated_prefix_sum(1);
        for (i, v) in p.values().iter().enumerate() {
            let x = (i as f64 + 0.5) / n as f64;
            assert!((v - x).abs() < 1.0 / n as f64);
        }
        let mut impulse = vec![0.0; n];
        impulse[5] = 1.0;
        let step = GridField::new(vec![n], 1, impulse)
            .unwrap()
            .repeated_prefix_sum(1);
        for (i, v) in step.values().iter().enumerate() {
            assert_eq!(*v, if i >= 5 { 1.0 / n as f64 } else { 0.0 });
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridField::new(vec![2], 1, vec![1.0]).is_err());
        assert!(GridField::new(vec![0], 1, vec![]).is_err());
        assert!(GridField::new(vec![1], 1, vec![f64::NAN]).is_err());
    }
}

use super::grid::{mirror, mirror_index, GridField};
use super::IntegralField;
use crate::error::{Error, Result};
use crate::kernels::factorial;

/// Exact order-`n` repeated antiderivative, along the first `kernel_dim` axes,
/// of the mirror-extended multilinear interpolant of a grid.
///
/// The interpolant is piecewise linear between sample centres, so its repeated
/// antiderivatives are piecewise polynomials. For every combination of partial
/// orders `0..=n` per kernel axis the value at each sample centre of a padded
/// lattice is tabulated; evaluation expands the polynomial of the enclosing
/// cell from these tables. Constants of integration are zero at the lower
/// corner of the padded lattice. The remaining axes are linearly interpolated.
#[derive(Debug, Clone)]
pub struct GridAntiderivative {
    order: usize,
    kernel_dim: usize,
    dout: usize,
    res: Vec<usize>,
    /// First knot index per axis (knot `k` sits at `(k + 0.5) / res`).
    first: Vec<i64>,
    /// Number of knots per axis.
    count: Vec<usize>,
    /// One table per multi-order, `j_0 + (n+1) j_1 + ...`.
    tables: Vec<Vec<f64>>,
}

impl GridAntiderivative {
    /// Builds the tables with a padding of `margin` (in domain units) around
    /// the unit box along each kernel axis.
    pub fn new(grid: &GridField, order: usize, kernel_dim: usize, margin: f64) -> Result<Self> {
        let din = grid.din();
        if order == 0 || kernel_dim == 0 || kernel_dim > din {
            return Err(Error::InvalidInput(format!(
                "antiderivative needs order >= 1 and 1 <= kernel_dim <= {din}"
            )));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::InvalidInput("margin must be non-negative".into()));
        }
        let res = grid.resolution().to_vec();
        let dout = grid.dout();
        let mut first = Vec::with_capacity(din);
        let mut count = Vec::with_capacity(din);
        for (a, &n) in res.iter().enumerate() {
            if a < kernel_dim {
                let lo = (-margin * n as f64 - 0.5).floor() as i64 - 1;
                let hi = ((1.0 + margin) * n as f64 - 0.5).ceil() as i64 + 1;
                first.push(lo);
                count.push((hi - lo + 1) as usize);
            } else {
                first.push(0);
                count.push(n);
            }
        }
        let total: usize = count.iter().product();
        let mut base = vec![0.0; total * dout];
        let mut src = vec![0usize; din];
        for (idx, out) in base.chunks_exact_mut(dout).enumerate() {
            let mut r = idx;
            for a in 0..din {
                src[a] = mirror_index(first[a] + (r % count[a]) as i64, res[a]);
                r /= count[a];
            }
            out.copy_from_slice(grid.at(&src));
        }

        let orders = order + 1;
        let n_tables = orders.pow(kernel_dim as u32);
        let mut tables: Vec<Vec<f64>> = vec![Vec::new(); n_tables];
        tables[0] = base;
        for a in 0..kernel_dim {
            let h = 1.0 / res[a] as f64;
            let stride: usize = count[..a].iter().product::<usize>() * dout;
            let len = count[a];
            let outer = total * dout / (len * stride);
            let axis_step = orders.pow(a as u32);
            for t in 0..n_tables {
                // Tables already present with j_a = 0 spawn j_a = 1..=n.
                if tables[t].is_empty() || (t / axis_step) % orders != 0 {
                    continue;
                }
                let mut derived: Vec<Vec<f64>> = vec![vec![0.0; total * dout]; order + 1];
                derived[0] = tables[t].clone();
                for o in 0..outer {
                    for inner in 0..stride {
                        let start = o * len * stride + inner;
                        for k in 0..len - 1 {
                            let at = start + k * stride;
                            let nx = at + stride;
                            let a0 = derived[0][at];
                            let a1 = derived[0][nx];
                            for m in 1..=order {
                                let mut v = a0 * h.powi(m as i32) / factorial(m)
                                    + (a1 - a0) * h.powi(m as i32) / factorial(m + 1);
                                for j in 1..=m {
                                    v += derived[j][at] * h.powi((m - j) as i32) / factorial(m - j);
                                }
                                derived[m][nx] = v;
                            }
                        }
                    }
                }
                for (m, table) in derived.into_iter().enumerate().skip(1) {
                    tables[t + m * axis_step] = table;
                }
            }
        }
        Ok(Self {
            order,
            kernel_dim,
            dout,
            res,
            first,
            count,
            tables,
        })
    }

    /// Domain box (per axis) on which the tables are valid.
    pub fn valid_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for a in 0..self.res.len() {
            if a < self.kernel_dim {
                let h = 1.0 / self.res[a] as f64;
                lo.push((self.first[a] as f64 + 0.5) * h);
                hi.push((self.first[a] + self.count[a] as i64 - 1) as f64 * h + 0.5 * h);
            } else {
                lo.push(f64::NEG_INFINITY);
                hi.push(f64::INFINITY);
            }
        }
        (lo, hi)
    }

    /// Evaluates the antiderivative; kernel-axis coordinates outside
    /// [`GridAntiderivative::valid_box`] are clamped to it.
    pub fn sample_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.res.len();
        let n = self.order;
        // Per axis: list of (table order j, knot index, coefficient).
        let mut terms: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(d);
        for a in 0..d {
            let len = self.count[a];
            let res = self.res[a] as f64;
            let mut t = Vec::with_capacity(n + 2);
            if a < self.kernel_dim {
                let h = 1.0 / res;
                let u = (x[a] * res - 0.5 - self.first[a] as f64).clamp(0.0, (len - 1) as f64);
                let k = (u.floor() as usize).min(len - 2);
                let s = (u - k as f64) * h;
                for j in 1..=n {
                    t.push((j, k, s.powi((n - j) as i32) / factorial(n - j)));
                }
                let tail = s.powi(n as i32 + 1) / (factorial(n + 1) * h);
                t.push((0, k, s.powi(n as i32) / factorial(n) - tail));
                t.push((0, k + 1, tail));
            } else {
                let u = (mirror(x[a]) * res - 0.5).clamp(0.0, (len - 1) as f64);
                let k = (u.floor() as usize).min(len.saturating_sub(2));
                let f = u - k as f64;
                t.push((0, k, 1.0 - f));
                if len > 1 {
                    t.push((0, k + 1, f));
                }
            }
            terms.push(t);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut choice = vec![0usize; d];
        loop {
            let mut w = 1.0;
            let mut table = 0;
            let mut flat = 0;
            for a in (0..d).rev() {
                let (j, k, c) = terms[a][choice[a]];
                w *= c;
                flat = flat * self.count[a] + k;
                if a < self.kernel_dim {
                    table = table * (n + 1) + j;
                }
            }
            if w != 0.0 {
                let v = &self.tables[table][flat * self.dout..(flat + 1) * self.dout];
                for (o, vv) in out.iter_mut().zip(v) {
                    *o += w * vv;
                }
            }
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                choice[a] += 1;
                if choice[a] < terms[a].len() {
                    break;
                }
                choice[a] = 0;
                a += 1;
            }
        }
    }
}

impl IntegralField for GridAntiderivative {
    fn order(&self) -> usize {
        self.order
    }

    fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    fn din(&self) -> usize {
        self.res.len()
    }

    fn dout(&self) -> usize {
        self.dout
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.sample_into(x, out)
    }

    fn valid_box(&self) -> (Vec<f64>, Vec<f64>) {
        GridAntiderivative::valid_box(self)
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Identity,
}

/// `x * sigmoid(x)`
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn swish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Swish => swish(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Swish => swish_derivative(z),
            Activation::Identity => 1.0,
        }
    }
}

/// A dense layer `y = act(W x + b)` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Array2<f64>,
    bias: Array1<f64>,
    activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Multi-layer perceptron with Swish hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer gradients, laid out exactly like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer, `(batch, in)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `(batch, out)`.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidInput(
            "an MLP needs at least an input and an output width".into(),
        ));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::InvalidInput("layer widths must be positive".into()));
    }
    Ok(())
}

fn activation_for(layer: usize, n_layers: usize) -> Activation {
    if layer + 1 == n_layers {
        Activation::Identity
    } else {
        Activation::Swish
    }
}

impl Mlp {
    /// Random network with Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|k| {
                let (fan_in, fan_out) = (widths[k], widths[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: activation_for(k, n_layers),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Builds a network from row-major weight matrices and bias vectors.
    pub fn from_parameters(
        widths: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_widths(widths)?;
        let n_layers = widths.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_layers} layers, got {} weight and {} bias blocks",
                weights.len(),
                biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (k, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k}: expected {fan_out}x{fan_in} weights and {fan_out} biases"
                )));
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((fan_out, fan_in), w)
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
                bias: Array1::from(b),
                activation: activation_for(k, n_layers),
            });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Layer::out_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Mutable parameter blocks in layer order: weights (row-major), then bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Parameter blocks in the same order as [`Mlp::parameters_mut`].
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// Rounds every parameter to the nearest 32-bit float.
    pub fn round_to_f32(&mut self) {
        for block in self.parameters_mut() {
            for p in block {
                *p = *p as f32 as f64;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut a = Array1::from(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.weights.dot(&a);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Evaluates a batch of inputs laid out as rows of `xs`.
    pub fn forward_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(xs)?;
        let mut a = xs.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass that records what backpropagation needs.
    pub fn forward_trace(&self, xs: ArrayView2<f64>) -> Result<Trace> {
        self.check_batch(xs)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = xs.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            let next = z.mapv(|v| layer.activation.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(Trace {
            inputs,
            pre,
            output: a,
        })
    }

    /// Backpropagates `d_out` (rows aligned with the traced batch). Returns
    /// parameter gradients summed over the batch and the input gradients.
    pub fn backward_batch(
        &self,
        trace: &Trace,
        d_out: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if d_out.dim() != trace.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} does not match traced output {:?}",
                d_out.dim(),
                trace.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut grad_w = Vec::with_capacity(n);
        let mut grad_b = Vec::with_capacity(n);
        let mut delta = d_out.to_owned();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let mut dz = delta;
            if layer.activation != Activation::Identity {
                dz.zip_mut_with(&trace.pre[k], |d, &z| *d *= layer.activation.derivative(z));
            }
            // The product of a transposed view may come back column-major.
            grad_w.push(
                dz.t()
                    .dot(&trace.inputs[k])
                    .as_standard_layout()
                    .into_owned(),
            );
            grad_b.push(dz.sum_axis(Axis(0)));
            delta = dz.dot(&layer.weights);
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok((
            Gradients {
                weights: grad_w,
                biases: grad_b,
            },
            delta,
        ))
    }

    /// Single-sample backpropagation: gradients of `L` given `dL/dy`.
    pub fn backward(&self, x: &[f64], d_out: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if d_out.len() != self.output_dim() {
            return Err(Error::InputShape {
                expected: self.output_dim(),
                got: d_out.len(),
            });
        }
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let trace = self.forward_trace(xs)?;
        let dy = ArrayView2::from_shape((1, d_out.len()), d_out).expect("contiguous row");
        let (grads, dx) = self.backward_batch(&trace, dy)?;
        Ok((grads, dx.row(0).to_vec()))
    }

    fn check_batch(&self, xs: ArrayView2<f64>) -> Result<()> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got: xs.ncols(),
            });
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Gradient blocks in the order of [`Mlp::parameters_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Largest relative disagreement between backpropagated gradients of
/// `L = Σ d_out ⊙ net(xs)` and central finite differences with step `step`,
/// over all parameters and inputs. Entries are compared relative to
/// `max(|analytic|, |numeric|, floor)`.
pub fn gradient_check(
    net: &Mlp,
    xs: ArrayView2<f64>,
    d_out: ArrayView2<f64>,
    step: f64,
    floor: f64,
) -> Result<f64> {
    let loss =
        |n: &Mlp, x: ArrayView2<f64>| -> Result<f64> { Ok((n.forward_batch(x)? * &d_out).sum()) };
    let trace = net.forward_trace(xs)?;
    let (grads, dx) = net.backward_batch(&trace, d_out)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(floor);
    let mut worst = 0.0f64;

    let mut probe = net.clone();
    for (bi, block) in grads.blocks().iter().enumerate() {
        for (i, &analytic) in block.iter().enumerate() {
            let original = probe.parameters_mut()[bi][i];
            probe.parameters_mut()[bi][i] = original + step;
            let up = loss(&probe, xs)?;
            probe.parameters_mut()[bi][i] = original - step;
            let down = loss(&probe, xs)?;
            probe.parameters_mut()[bi][i] = original;
            worst = worst.max(rel(analytic, (up - down) / (2.0 * step)));
        }
    }

    let mut x = xs.to_owned();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let original = x[(r, c)];
            x[(r, c)] = original + step;
            let up = loss(net, x.view())?;
            x[(r, c)] = original - step;
            let down = loss(net, x.view())?;
            x[(r, c)] = original;
            worst = worst.max(rel(dx[(r, c)], (up - down) / (2.0 * step)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line evaluation over nested `Vec`s, independent of ndarray.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in net.layers() {
            let w = layer.weights();
            let mut next = vec![0.0; layer.out_dim()];
            for (i, out) in next.iter_mut().enumerate() {
                let mut s = layer.bias()[i];
                for (j, aj) in a.iter().enumerate() {
                    s += w[[i, j]] * aj;
                }
                *out = match layer.activation() {
                    Activation::Swish => s / (1.0 + (-s).exp()),
                    Activation::Identity => s,
                };
            }
            a = next;
        }
        a
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_parameters(&[1, 1], vec![vec![1.0]], vec![vec![0.0]]).unwrap();
        assert_eq!(net.forward(&[1.5]).unwrap(), vec![1.5]);
    }

    #[test]
    fn swish_of_zero_is_zero() {
        let net = Mlp::from_parameters(
            &[1, 1, 1],
            vec![vec![1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(swish(0.0), 0.0);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 7, 2], &mut rng).unwrap();
        let x = [0.3, -1.2, 0.8];
        let a = net.forward(&x).unwrap();
        let b = reference_forward(&net, &x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14, "{u} vs {v}");
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[2, 16, 16, 3], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((5, 2), |(i, j)| (i as f64 - 2.0) * 0.4 + j as f64 * 0.1);
        let batch = net.forward_batch(xs.view()).unwrap();
        for i in 0..5 {
            let single = net.forward(xs.row(i).as_slice().unwrap()).unwrap();
            for c in 0..3 {
                assert!((batch[[i, c]] - single[c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[2, 4, 1], &mut rng).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::InputShape {
                expected: 2,
                got: 1
            })
        ));
        assert!(net.backward(&[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[2, 8, 8, 2], &mut rng).unwrap();
        let (g, dx) = net.backward(&[0.4, -0.1], &[0.0, 0.0]).unwrap();
        assert!(g.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_unit_gradient_is_chain_rule() {
        let net = Mlp::from_parameters(&[1, 1], vec![vec![2.5]], vec![vec![0.0]]).unwrap();
        let (g, dx) = net.backward(&[0.7], &[3.0]).unwrap();
        assert!((g.weights[0][[0, 0]] - 3.0 * 0.7).abs() < 1e-15);
        assert!((g.biases[0][0] - 3.0).abs() < 1e-15);
        assert!((dx[0] - 3.0 * 2.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Mlp::new(&[3], &mut rng).is_err());
        assert!(Mlp::new(&[3, 0, 1], &mut rng).is_err());
        assert!(Mlp::from_parameters(&[1, 1], vec![vec![1.0, 2.0]], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn f32_rounding_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Mlp::new(&[2, 5, 1], &mut rng).unwrap();
        net.round_to_f32();
        let once = net.clone();
        net.round_to_f32();
        assert_eq!(once, net);
    }

    #[test]
    fn backprop_matches_finite_differences_on_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let depth = rng.random_range(1..=4);
            let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=32)).collect();
            let net = Mlp::new(&widths, &mut rng).unwrap();
            let batch = 3;
            let xs = Array2::from_shape_fn((batch, widths[0]), |_| rng.random_range(-2.0..2.0));
            let dy = Array2::from_shape_fn((batch, widths[depth]), |_| rng.random_range(-1.0..1.0));
            let err = gradient_check(&net, xs.view(), dy.view(), 1e-5, 1e-4).unwrap();
            assert!(err < 1e-6, "widths {widths:?}: relative error {err:e}");
        }
    }

    #[test]
    fn parameter_gradients_are_linear_in_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[2, 4, 1], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
        let dy = Array2::from_elem((2, 1), 1.0);
        let trace = net.forward_trace(xs.view()).unwrap();
        let (g1, _) = net.backward_batch(&trace, dy.view()).unwrap();
        let (g2, _) = net.backward_batch(&trace, (&dy * 2.0).view()).unwrap();
        for (a, b) in g1.blocks().iter().zip(g2.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gradient_blocks_are_contiguous_for_degenerate_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for widths in [[1, 1, 1], [1, 5, 1], [5, 1, 5], [3, 2, 1]] {
            let net = Mlp::new(&widths, &mut rng).unwrap();
            for batch in [1, 2, 4] {
                let xs = Array2::from_elem((batch, widths[0]), 0.3);
                let dy = Array2::from_elem((batch, widths[2]), 1.0);
                let trace = net.forward_trace(xs.view()).unwrap();
                let (g, _) = net.backward_batch(&trace, dy.view()).unwrap();
                assert_eq!(g.blocks().len(), 4);
            }
        }
    }
}

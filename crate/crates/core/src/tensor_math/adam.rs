/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Defaults used for integral-field training.
    pub const FIELD: AdamConfig = AdamConfig {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    /// Defaults used for kernel fitting (few parameters, larger step).
    pub const KERNEL: AdamConfig = AdamConfig {
        lr: 1e-2,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::FIELD
    }
}

/// Moment estimates for a flat parameter vector, possibly split into blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One bias-corrected Adam update with the configured learning rate.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr);
    }

    /// One update using `lr` in place of the configured rate (for schedules).
    ///
    /// Blocks in `params` and `grads` are concatenated in order; their total
    /// length must equal the state length.
    pub fn step_with_lr(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient block count");
        let total: usize = params.iter().map(|p| p.len()).sum();
        assert_eq!(
            total,
            self.len(),
            "parameter count does not match Adam state"
        );

        self.step_count += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        let mut offset = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            assert_eq!(p.len(), g.len(), "parameter/gradient block length");
            let m = &mut self.first_moment[offset..offset + p.len()];
            let v = &mut self.second_moment[offset..offset + p.len()];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += p.len();
        }
    }

    /// Keeps only the entries whose index appears in `keep` (ascending).
    pub fn retain_indices(&mut self, keep: &[usize]) {
        self.first_moment = keep.iter().map(|&i| self.first_moment[i]).collect();
        self.second_moment = keep.iter().map(|&i| self.second_moment[i]).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = vec![1.0, -2.0, 3.5];
        let g = vec![0.0; 3];
        let mut s = AdamState::new(3, AdamConfig::FIELD);
        for _ in 0..10 {
            s.step(&mut [&mut p], &[&g]);
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(s.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = vec![0.0, 0.0];
        let g = vec![0.37, -5.0];
        let lr = 0.01;
        let mut s = AdamState::new(2, AdamConfig::KERNEL.with_lr(lr));
        s.step(&mut [&mut p], &[&g]);
        assert!((p[0] + lr * 0.37 / (0.37 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - lr * 5.0 / (5.0 + 1e-8)).abs() < 1e-15);
        assert!((p[0] + lr).abs() < 1e-9 && (p[1] - lr).abs() < 1e-9);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::FIELD.with_lr(0.1));
        for _ in 0..100 {
            let g = vec![2.0 * (p[0] - 3.0)];
            s.step(&mut [&mut p], &[&g]);
        }
        assert!((p[0] - 3.0).abs() < 0.1, "p = {}", p[0]);
    }

    #[test]
    fn blocks_are_concatenated() {
        let mut a = vec![1.0];
        let mut b = vec![1.0, 1.0];
        let mut s = AdamState::new(3, AdamConfig::FIELD);
        s.step(&mut [&mut a, &mut b], &[&[1.0], &[0.0, -1.0]]);
        assert!(a[0] < 1.0 && b[0] == 1.0 && b[1] > 1.0);
    }

    #[test]
    fn retain_drops_moments() {
        let mut p = vec![0.0; 4];
        let mut s = AdamState::new(4, AdamConfig::FIELD);
        s.step(&mut [&mut p], &[&[1.0, 2.0, 3.0, 4.0]]);
        s.retain_indices(&[1, 3]);
        assert_eq!(s.len(), 2);
        let mut q = vec![0.0; 2];
        s.step(&mut [&mut q], &[&[0.0, 0.0]]);
        assert_eq!(s.step_count(), 2);
    }
}

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    cfg: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [F], grad: &[F]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (F::of(self.cfg.beta1), F::of(self.cfg.beta2));
        let one = F::one();
        let lr = F::of(self.cfg.learning_rate);
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let eps = F::of(self.cfg.epsilon);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::<f64>::new(2, AdamConfig::default());
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -3.0]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut adam = Adam::<f32>::new(1, cfg);
        let mut x = vec![5.0f32];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 2.0)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 2.0).abs() < 1e-2);
    }
}

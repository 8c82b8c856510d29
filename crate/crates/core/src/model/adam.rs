use super::{Gradients, MlpModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one accumulator per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: Gradients::zeros(dim),
            v: Gradients::zeros(dim),
            step: 0,
        }
    }

    /// One update: `p -= lr / (1 - b1^t) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)`.
    pub fn update(&mut self, model: &mut MlpModel<T>, grad: &Gradients<T>, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let one = T::one();
        let step_size = T::of(cfg.learning_rate / (1.0 - cfg.beta1.powi(t)));
        let bc2_sqrt = T::of((1.0 - cfg.beta2.powi(t)).sqrt());
        let eps = T::of(cfg.eps);
        let apply = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
        };
        ndarray::Zip::from(&mut model.w1)
            .and(&grad.w1)
            .and(&mut self.m.w1)
            .and(&mut self.v.w1)
            .for_each(|p, &g, m, v| apply(p, g, m, v));
        ndarray::Zip::from(&mut model.b1)
            .and(&grad.b1)
            .and(&mut self.m.b1)
            .and(&mut self.v.b1)
            .for_each(|p, &g, m, v| apply(p, g, m, v));
        ndarray::Zip::from(&mut model.w2)
            .and(&grad.w2)
            .and(&mut self.m.w2)
            .and(&mut self.v.w2)
            .for_each(|p, &g, m, v| apply(p, g, m, v));
        apply(&mut model.b2, grad.b2, &mut self.m.b2, &mut self.v.b2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written out directly, used as the reference.
    fn reference(p0: f64, grads: &[f64], c: &AdamConfig) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let m_hat = m / (1.0 - c.beta1.powi(t));
            let v_hat = v / (1.0 - c.beta2.powi(t));
            p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
        }
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut model = MlpModel::<f64>::zeros(2);
        let mut g = Gradients::zeros(2);
        g.b2 = 3.0;
        g.w1[[0, 1]] = -0.5;
        let mut s = AdamState::new(2);
        s.update(&mut model, &g, &AdamConfig::default());
        assert_eq!(s.step, 1);
        assert!((model.b2 + 1e-4).abs() < 1e-10);
        assert!((model.w1[[0, 1]] - 1e-4).abs() < 1e-10);
        assert_eq!(model.w1[[0, 0]], 0.0);
    }

    #[test]
    fn matches_scalar_reference() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let grads = [0.3, -1.2, 0.05, 2.0, 0.0, -0.7];
        let mut model = MlpModel::<f64>::zeros(1);
        model.b2 = 0.4;
        let mut s = AdamState::new(1);
        for &g in &grads {
            let mut gr = Gradients::zeros(1);
            gr.b2 = g;
            s.update(&mut model, &gr, &cfg);
        }
        assert!((model.b2 - reference(0.4, &grads, &cfg)).abs() < 1e-12);
    }
}

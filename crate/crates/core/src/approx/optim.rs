use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    /// `param -= lr * grad`. Only used to make hand-computed tests exact.
    Plain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn adam(param_count: usize, lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn plain(param_count: usize, lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Plain,
            ..Self::adam(param_count, lr)
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn param_count(&self) -> usize {
        self.m.len()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Plain => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let t = self.t as i32;
                let step = self.lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
                let eps_hat = self.epsilon * (1.0 - b2.powi(t)).sqrt();
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    // lr * m_hat / (sqrt(v_hat) + eps), folded into one division
                    *p -= step * *m / (v.sqrt() + eps_hat);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut opt = Optimizer::adam(2, 0.01);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * sign(g) up to epsilon
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters_unchanged() {
        let mut opt = Optimizer::adam(3, 0.1);
        let mut p = vec![0.5, 0.0, -2.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![0.5, 0.0, -2.0]);
    }

    #[test]
    fn matches_textbook_adam() {
        let lr = 0.05;
        let mut opt = Optimizer::adam(1, lr);
        let mut p = [2.0];
        let (mut m, mut v, mut q) = (0.0, 0.0, 2.0f64);
        for t in 1..=20 {
            let g = 2.0 * q - 1.0;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            q -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            let g_impl = 2.0 * p[0] - 1.0;
            opt.step(&mut p, &[g_impl]).unwrap();
        }
        assert!((p[0] - q).abs() < 1e-12, "{} vs {}", p[0], q);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Optimizer::plain(2, 0.1);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}

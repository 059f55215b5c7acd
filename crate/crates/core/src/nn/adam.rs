use super::{GradientVector, Mlp};
use crate::error::{Error, Result};

/// Adam moments for gradient *ascent*.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Moves `net` by `+lr * m_hat / (sqrt(v_hat) + eps)`. A non-finite
    /// gradient is rejected before any state changes.
    pub fn ascent(&mut self, net: &mut Mlp, grad: &GradientVector) -> Result<()> {
        if grad.len() != net.len() || grad.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                expected: net.len(),
                got: grad.len(),
            });
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("ascent gradient".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in net
            .params_mut()
            .iter_mut()
            .zip(&grad.0)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(value: f64) -> Mlp {
        // [1, 1] has two parameters: one weight and one bias.
        Mlp::from_params(&[1, 1], vec![value, 0.0]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net(0.3);
        let mut adam = AdamState::new(2, 0.001);
        adam.ascent(&mut net, &GradientVector::zeros(2)).unwrap();
        assert_eq!(net.params(), &[0.3, 0.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(2, 0.001);
        adam.ascent(&mut net, &GradientVector(vec![1.0, 0.0])).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let expected = 0.001 / (1.0 + 1e-8);
        assert!((net.params()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        let mut net = scalar_net(0.5);
        let mut adam = AdamState::new(2, 0.001);
        let before = adam.clone();
        assert!(adam.ascent(&mut net, &GradientVector(vec![f64::NAN, 0.0])).is_err());
        assert_eq!(net.params(), &[0.5, 0.0]);
        assert_eq!(adam, before);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut net = scalar_net(0.1);
            let mut adam = AdamState::new(2, 0.01);
            for k in 0..10 {
                adam.ascent(&mut net, &GradientVector(vec![k as f64 - 4.5, 0.3])).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }
}

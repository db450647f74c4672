use serde::{Deserialize, Serialize};

use super::{shape_err, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for a fixed parameter list, with an L2 term added to the
/// gradient before the moment update.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            weight_decay: 0.0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update. A non-finite gradient aborts the step before any
    /// parameter or moment is touched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(shape_err(
                "adam_step",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != p.len() {
                return Err(shape_err(
                    "adam_step",
                    format!("parameter {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.all_finite() {
                return Err(TensorError::NonFiniteGradient { index: i });
            }
        }
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let wd = self.weight_decay;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gi = gi + wd * *x;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(value: f64) -> Vec<Tensor> {
        vec![Tensor::vector(vec![value])]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0] {
            let mut params = one(2.0);
            let mut adam = AdamState::new(&params, AdamConfig { epsilon: 0.0, ..Default::default() });
            adam.step(&mut params, &one(g)).unwrap();
            let delta = params[0].item() - 2.0;
            assert!((delta.abs() - 1e-4).abs() < 1e-15, "g={g} delta={delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let mut params = one(0.75);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params, &one(0.0)).unwrap();
        assert_eq!(params[0].item(), 0.75);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn weight_decay_alone_shrinks_toward_zero() {
        // First step with g = 0: the effective gradient is wd * p, so
        // m_hat = wd * p and v_hat = (wd * p)^2, giving
        // delta = -lr * wd * p / (wd * |p| + eps).
        let (p0, wd, lr, eps) = (0.5, 1e-5, 1e-4, 1e-8);
        let mut params = one(p0);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.weight_decay = wd;
        adam.step(&mut params, &one(0.0)).unwrap();
        let expected = p0 - lr * wd * p0 / (wd * p0 + eps);
        assert!((params[0].item() - expected).abs() < 1e-15);
        assert!(params[0].item() < p0 && params[0].item() > 0.0);
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut params = one(1.0);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let err = adam.step(&mut params, &one(f64::NAN)).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient { index: 0 });
        assert_eq!(params[0].item(), 1.0);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn step_counter_increments_once_per_step() {
        let mut params = one(1.0);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        for k in 1..=5 {
            adam.step(&mut params, &one(0.1)).unwrap();
            assert_eq!(adam.steps(), k);
        }
    }
}

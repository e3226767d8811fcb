use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Optimiser and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 16,
            epochs: 200,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Classic momentum: `v <- mu*v + g; theta <- theta - lr*v`, then the gradient is zeroed.
pub fn sgd_momentum_step<T: Scalar>(params: &mut [&mut Param<T>], cfg: &OptimizerConfig) {
    let lr = T::of(cfg.learning_rate);
    let mu = T::of(cfg.momentum);
    for p in params.iter_mut() {
        let Param {
            tensor, velocity, ..
        } = &mut **p;
        let grads = tensor.grad.data_mut();
        let values = tensor.value.data_mut();
        for ((theta, v), g) in values.iter_mut().zip(velocity.iter_mut()).zip(grads.iter_mut()) {
            *v = mu * *v + *g;
            *theta -= lr * *v;
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn cfg(lr: f64, mu: f64) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: lr,
            momentum: mu,
            ..Default::default()
        }
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = Param::new("w", Tensor::<f64>::from_vec([1, 1, 1, 1, 2], vec![1.0, -2.0]).unwrap());
        p.grad_mut().data_mut().copy_from_slice(&[0.5, 4.0]);
        sgd_momentum_step(&mut [&mut p], &cfg(0.1, 0.0));
        assert_eq!(p.value().data(), &[1.0 - 0.1 * 0.5, -2.0 - 0.1 * 4.0]);
        assert_eq!(p.grad().data(), &[0.0, 0.0]);
    }

    #[test]
    fn two_momentum_steps_by_hand() {
        let mut p = Param::new("w", Tensor::<f64>::zeros([1, 1, 1, 1, 1]));
        let c = cfg(0.1, 0.9);
        p.grad_mut().data_mut()[0] = 1.0;
        sgd_momentum_step(&mut [&mut p], &c);
        assert!((p.value().data()[0] + 0.1).abs() < 1e-15);
        p.grad_mut().data_mut()[0] = 1.0;
        sgd_momentum_step(&mut [&mut p], &c);
        assert!((p.velocity[0] - 1.9).abs() < 1e-15);
        assert!((p.value().data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_decays_momentum_only() {
        let mut p = Param::new("w", Tensor::<f64>::zeros([1, 1, 1, 1, 1]));
        p.velocity[0] = 2.0;
        let before = p.value().data()[0];
        sgd_momentum_step(&mut [&mut p], &cfg(0.1, 0.9));
        assert!((p.velocity[0] - 1.8).abs() < 1e-15);
        // the parameter still moves by the decayed velocity
        assert!((p.value().data()[0] - (before - 0.18)).abs() < 1e-15);
    }

    #[test]
    fn default_settings_validate() {
        let c = OptimizerConfig::default();
        assert_eq!((c.learning_rate, c.batch_size, c.epochs), (0.02, 16, 200));
        c.validate().unwrap();
        assert!(cfg(0.0, 0.9).validate().is_err());
        assert!(cfg(0.1, 1.0).validate().is_err());
    }
}

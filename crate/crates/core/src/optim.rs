//! SGD and Adam parameter updates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseNet, GradientVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    /// Gradient ascent; the gradient is negated before the update rule.
    Ascend,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    /// Adam uses `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => num_params,
        };
        Ok(OptimizerState {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            step_count: 0,
        })
    }

    pub fn sgd(learning_rate: f64, num_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, num_params)
    }

    pub fn adam(learning_rate: f64, num_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate, num_params)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to `net`. On error neither the net nor the state change.
    pub fn step(
        &mut self,
        net: &mut DenseNet,
        grad: &GradientVector,
        direction: Direction,
    ) -> Result<()> {
        let params = net.params_mut();
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
            });
        }
        if self.kind == OptimizerKind::Adam && self.first_moment.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_moment.len(),
                got: params.len(),
            });
        }
        if let Some(i) = grad.values().iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(
                None,
                format!("gradient entry {i} is not finite"),
            ));
        }
        let sign = match direction {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad.values()) {
                    *p -= lr * (sign * g);
                }
            }
            OptimizerKind::Adam => {
                let t = (self.step_count + 1) as i32;
                let bias1 = 1.0 - self.beta1.powi(t);
                let bias2 = 1.0 - self.beta2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grad.values()).enumerate() {
                    let g = sign * g;
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn scalar_net(p: f64) -> DenseNet {
        DenseNet::new(vec![1, 1], vec![Activation::Linear], vec![p, 0.0]).unwrap()
    }

    fn grad(g: f64) -> GradientVector {
        GradientVector::new(vec![g, 0.0]).unwrap()
    }

    #[test]
    fn sgd_descend_and_ascend() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::sgd(0.1, 2).unwrap();
        opt.step(&mut net, &grad(2.0), Direction::Descend).unwrap();
        assert!((net.params()[0] - 0.8).abs() < 1e-15);

        let mut net = scalar_net(1.0);
        opt.step(&mut net, &grad(2.0), Direction::Ascend).unwrap();
        assert!((net.params()[0] - 1.2).abs() < 1e-15);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        for g in [1e-3, 0.5, 30.0, -7.0] {
            let mut net = scalar_net(0.0);
            let mut opt = OptimizerState::adam(1e-3, 2).unwrap();
            opt.step(&mut net, &grad(g), Direction::Descend).unwrap();
            // m̂ = g, v̂ = g², so the update is lr · g / (|g| + ε)
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((net.params()[0] - expected).abs() < 1e-15, "g = {g}");
            assert!((net.params()[0].abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_config_and_gradients() {
        assert!(OptimizerState::sgd(0.0, 1).is_err());
        assert!(OptimizerState::adam(-1.0, 1).is_err());
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::sgd(0.1, 2).unwrap();
        assert!(opt
            .step(
                &mut net,
                &GradientVector::new(vec![1.0]).unwrap(),
                Direction::Descend
            )
            .is_err());
        assert_eq!(net.params()[0], 1.0);
        assert_eq!(opt.step_count(), 0);
    }
}

use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

/// One RMSProp update over a flat parameter slice.
pub fn rmsprop_update(
    params: &mut [f64],
    grads: &[f64],
    acc: &mut [f64],
    cfg: &RmsPropConfig,
) -> Result<()> {
    if grads.len() != params.len() || acc.len() != params.len() {
        return Err(Error::shape("rmsprop", params.len(), grads.len().min(acc.len())));
    }
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = cfg.rho * *a + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (a.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Squared-gradient accumulators for every parameter of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    acc: Gradients,
}

impl RmsProp {
    pub fn new(net: &Network, config: RmsPropConfig) -> Self {
        Self {
            config,
            acc: Gradients::zeros_for(net),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.0.len() != net.layers().len() {
            return Err(Error::shape("rmsprop", net.layers().len(), grads.0.len()));
        }
        for ((layer, g), a) in net.layers_mut().iter_mut().zip(&grads.0).zip(&mut self.acc.0) {
            rmsprop_update(&mut layer.weights, &g.weights, &mut a.weights, &self.config)?;
            rmsprop_update(&mut layer.bias, &g.bias, &mut a.bias, &self.config)?;
        }
        Ok(())
    }

    pub fn accumulators(&self) -> &Gradients {
        &self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_step() {
        let cfg = RmsPropConfig {
            learning_rate: 0.1,
            rho: 0.9,
            epsilon: 1e-8,
        };
        let mut p = [1.0];
        let mut acc = [0.0];
        rmsprop_update(&mut p, &[2.0], &mut acc, &cfg).unwrap();
        assert!((acc[0] - 0.4).abs() < 1e-15);
        let delta = -0.1 * 2.0 / (0.4f64.sqrt() + 1e-8);
        assert!((p[0] - 1.0 - delta).abs() < 1e-15);
        assert!((delta + 0.316_227_7).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = RmsPropConfig::default();
        let mut p = [0.5, -0.25];
        let mut acc = [0.3, 0.0];
        rmsprop_update(&mut p, &[0.0, 0.0], &mut acc, &cfg).unwrap();
        assert_eq!(p, [0.5, -0.25]);
        assert!((acc[0] - 0.27).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let cfg = RmsPropConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut p = [0.0];
        let mut acc = [0.0];
        let mut last = 0.0;
        for _ in 0..200 {
            let before = p[0];
            rmsprop_update(&mut p, &[3.0], &mut acc, &cfg).unwrap();
            last = before - p[0];
        }
        assert!((last - 0.01).abs() < 1e-8, "{last}");
        assert!(acc[0] >= 0.0);
    }

    #[test]
    fn misaligned_shapes_rejected() {
        let cfg = RmsPropConfig::default();
        assert!(rmsprop_update(&mut [0.0; 2], &[0.0], &mut [0.0; 2], &cfg).is_err());
    }
}

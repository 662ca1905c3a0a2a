use serde::{Deserialize, Serialize};

use crate::class::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::loss::softmax;

pub const DEFAULT_VAR_FLOOR: f64 = 1e-9;

/// Per-class diagonal Gaussians with log priors from class frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_priors: Vec<Option<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub var_floor: f64,
}

impl GaussianNb {
    pub fn fit(data: &FeatureMatrix, var_floor: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        if var_floor.is_nan() || var_floor <= 0.0 {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        let d = data.dim();
        let mut counts = [0usize; NUM_CLASSES];
        let mut means = vec![vec![0.0; d]; NUM_CLASSES];
        for (x, y) in data.rows().zip(data.labels()) {
            let c = y.index();
            counts[c] += 1;
            means[c].iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        }
        let mut variances = vec![vec![0.0; d]; NUM_CLASSES];
        for (x, y) in data.rows().zip(data.labels()) {
            let c = y.index();
            for ((s, v), m) in variances[c].iter_mut().zip(x).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, &n) in variances.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v = (*v / n.max(1) as f64).max(var_floor));
        }
        let total = data.len() as f64;
        let log_priors = counts
            .iter()
            .map(|&n| (n > 0).then(|| (n as f64 / total).ln()))
            .collect();
        Ok(Self {
            log_priors,
            means,
            variances,
            var_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Unnormalized log joint per class; classes absent from training get -inf.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        (0..NUM_CLASSES)
            .map(|c| match self.log_priors[c] {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    lp + x
                        .iter()
                        .zip(&self.means[c])
                        .zip(&self.variances[c])
                        .map(|((v, m), s)| -half_ln_2pi - 0.5 * s.ln() - (v - m) * (v - m) / (2.0 * s))
                        .sum::<f64>()
                }
            })
            .collect()
    }

    /// Normalized posterior.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.log_joint(x))
    }
}

use serde::{Deserialize, Serialize};

use crate::class::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::loss::{cross_entropy, softmax};

pub const GRAD_TOLERANCE: f64 = 1e-6;

/// Multinomial logistic regression. `weights` is laid out `[feature][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dim: usize,
    /// Inverse regularization strength; `None` means no penalty.
    pub c: Option<f64>,
    pub max_iter: usize,
    pub iterations: usize,
}

fn linear(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for (i, &v) in x.iter().enumerate() {
        if v != 0.0 {
            let row = &w[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            z.iter_mut().zip(row).for_each(|(z, w)| *z += v * w);
        }
    }
    z
}

struct Problem<'a> {
    data: &'a FeatureMatrix,
    labels: Vec<usize>,
    penalty: f64,
}

impl Problem<'_> {
    /// `(sum CE + penalty/2 * |W|^2) / n`, bias unpenalized.
    fn objective(&self, w: &[f64], b: &[f64]) -> f64 {
        let n = self.data.len() as f64;
        let ce: f64 = self
            .data
            .rows()
            .zip(&self.labels)
            .map(|(x, &y)| cross_entropy(&softmax(&linear(w, b, x)), y))
            .sum();
        (ce + 0.5 * self.penalty * w.iter().map(|v| v * v).sum::<f64>()) / n
    }

    fn gradient(&self, w: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.data.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.penalty * v).collect();
        let mut gb = vec![0.0; NUM_CLASSES];
        let mut ce = 0.0;
        for (x, &y) in self.data.rows().zip(&self.labels) {
            let mut d = softmax(&linear(w, b, x));
            ce += cross_entropy(&d, y);
            d[y] -= 1.0;
            gb.iter_mut().zip(&d).for_each(|(g, d)| *g += d);
            for (i, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    let row = &mut gw[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
                    row.iter_mut().zip(&d).for_each(|(g, d)| *g += v * d);
                }
            }
        }
        gw.iter_mut().chain(gb.iter_mut()).for_each(|g| *g /= n);
        let obj = (ce + 0.5 * self.penalty * w.iter().map(|v| v * v).sum::<f64>()) / n;
        (obj, gw, gb)
    }
}

impl LogisticRegression {
    /// Full-batch gradient descent with Armijo backtracking.
    pub fn fit(data: &FeatureMatrix, c: Option<f64>, max_iter: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        if let Some(c) = c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("C must be positive, got {c}")));
            }
        }
        let problem = Problem {
            data,
            labels: data.labels().iter().map(|l| l.index()).collect(),
            penalty: c.map_or(0.0, |c| 1.0 / c),
        };
        let dim = data.dim();
        let mut w = vec![0.0; dim * NUM_CLASSES];
        let mut b = vec![0.0; NUM_CLASSES];
        let mut step = 1.0;
        let mut iterations = 0;
        'outer: while iterations < max_iter {
            let (f, gw, gb) = problem.gradient(&w, &b);
            let g2: f64 = gw.iter().chain(&gb).map(|g| g * g).sum();
            if g2.sqrt() < GRAD_TOLERANCE {
                break;
            }
            iterations += 1;
            step *= 2.0;
            loop {
                let nw: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
                let nb: Vec<f64> = b.iter().zip(&gb).map(|(b, g)| b - step * g).collect();
                if problem.objective(&nw, &nb) <= f - 1e-4 * step * g2 {
                    w = nw;
                    b = nb;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    // No representable decrease left along the gradient.
                    break 'outer;
                }
            }
        }
        if !w.iter().chain(&b).all(|v| v.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        Ok(Self {
            weights: w,
            bias: b,
            dim,
            c,
            max_iter,
            iterations,
        })
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        softmax(&linear(&self.weights, &self.bias, x))
    }
}

use crate::class::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Exhaustive-search k-nearest-neighbour voter.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub train: FeatureMatrix,
    pub n_neighbors: usize,
    pub p: f64,
}

impl Knn {
    pub fn fit(train: &FeatureMatrix, n_neighbors: usize, p: f64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        if n_neighbors == 0 || n_neighbors > train.len() {
            return Err(Error::Config(format!(
                "n_neighbors {n_neighbors} must be in 1..={}",
                train.len()
            )));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Config(format!("Minkowski p must be >= 1, got {p}")));
        }
        Ok(Self {
            train: train.clone(),
            n_neighbors,
            p,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    /// Vote shares among the nearest neighbours. Candidates are ordered by
    /// (distance, label), so equal-distance ties never depend on storage order.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut cand: Vec<(f64, usize)> = self
            .train
            .rows()
            .zip(self.train.labels())
            .map(|(row, y)| (minkowski(x, row, self.p), y.index()))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.n_neighbors;
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = [0usize; NUM_CLASSES];
        for &(_, y) in &cand[..k] {
            votes[y] += 1;
        }
        votes.iter().map(|&v| v as f64 / k as f64).collect()
    }
}

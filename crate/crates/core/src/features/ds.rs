use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::class::{SentimentClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::preprocess::TokenList;

/// Per-token class probabilities `p(class | token)` with additive smoothing.
/// Rows are ordered (negative, neutral, positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsModel {
    table: BTreeMap<String, [f64; NUM_CLASSES]>,
    smoothing_alpha: f64,
}

impl DsModel {
    pub fn fit<'a>(
        docs: impl IntoIterator<Item = (&'a TokenList, SentimentClass)>,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
        }
        let mut counts: HashMap<&str, [u64; NUM_CLASSES]> = HashMap::new();
        for (doc, label) in docs {
            for t in doc.iter() {
                counts.entry(t).or_default()[label.index()] += 1;
            }
        }
        let table = counts
            .into_iter()
            .map(|(t, c)| {
                let total: u64 = c.iter().sum();
                let denom = total as f64 + NUM_CLASSES as f64 * alpha;
                (t.to_string(), c.map(|n| (n as f64 + alpha) / denom))
            })
            .collect();
        Ok(Self {
            table,
            smoothing_alpha: alpha,
        })
    }

    pub fn get(&self, token: &str) -> Option<&[f64; NUM_CLASSES]> {
        self.table.get(token)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64; NUM_CLASSES])> {
        self.table.iter().map(|(t, r)| (t.as_str(), r))
    }

    /// Mean row over known tokens; uniform when none are known.
    pub fn features_into(&self, tokens: &TokenList, out: &mut [f64]) {
        out.fill(0.0);
        let mut known = 0usize;
        for row in tokens.iter().filter_map(|t| self.table.get(t)) {
            known += 1;
            out.iter_mut().zip(row).for_each(|(o, p)| *o += p);
        }
        if known == 0 {
            out.fill(1.0 / NUM_CLASSES as f64);
        } else {
            out.iter_mut().for_each(|o| *o /= known as f64);
        }
    }
}

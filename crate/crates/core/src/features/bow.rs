use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenList;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BowRepr {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
}

/// Capped TF-IDF vocabulary fitted on training documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BowRepr", into = "BowRepr")]
pub struct BowModel {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
    position: HashMap<String, usize>,
}

impl TryFrom<BowRepr> for BowModel {
    type Error = Error;

    fn try_from(r: BowRepr) -> Result<Self> {
        BowModel::new(r.vocabulary, r.idf, r.doc_count)
    }
}

impl From<BowModel> for BowRepr {
    fn from(m: BowModel) -> Self {
        BowRepr {
            vocabulary: m.vocabulary,
            idf: m.idf,
            doc_count: m.doc_count,
        }
    }
}

/// Smoothed inverse document frequency: `ln((1 + n_docs) / (1 + df)) + 1`.
pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl BowModel {
    pub fn new(vocabulary: Vec<String>, idf: Vec<f64>, doc_count: usize) -> Result<Self> {
        if vocabulary.len() != idf.len() {
            return Err(Error::Data("bow vocabulary and idf lengths differ".into()));
        }
        if idf.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("idf values must be finite and non-negative".into()));
        }
        let position: HashMap<String, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if position.len() != vocabulary.len() {
            return Err(Error::Data("bow vocabulary has duplicate entries".into()));
        }
        Ok(Self {
            vocabulary,
            idf,
            doc_count,
            position,
        })
    }

    /// Keeps the `size` most frequent tokens (ties lexicographic) and their idf.
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a TokenList>, size: usize) -> Result<Self> {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let mut seen: Vec<&str> = Vec::with_capacity(doc.len());
            for t in doc.iter() {
                *freq.entry(t).or_default() += 1;
                if !seen.contains(&t) {
                    seen.push(t);
                    *df.entry(t).or_default() += 1;
                }
            }
        }
        if n_docs == 0 {
            return Err(Error::Data("cannot fit bag of words on an empty corpus".into()));
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if ranked.len() < size {
            log::warn!(
                "only {} distinct training tokens; bag of words shrinks from {size}",
                ranked.len()
            );
        }
        ranked.truncate(size);
        let vocabulary: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
        let idf = ranked.iter().map(|(t, _)| smoothed_idf(n_docs, df[t])).collect();
        Self::new(vocabulary, idf, n_docs)
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    /// Raw-count tf times idf, L2-normalized unless all zero.
    pub fn features_into(&self, tokens: &TokenList, out: &mut [f64]) {
        out.fill(0.0);
        for t in tokens.iter() {
            if let Some(&i) = self.position.get(t) {
                out[i] += 1.0;
            }
        }
        for (v, idf) in out.iter_mut().zip(&self.idf) {
            *v *= idf;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

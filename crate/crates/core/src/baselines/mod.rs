//! Comparison classifiers trained on the same feature vectors: Gaussian naive
//! Bayes, k-nearest neighbours and multinomial logistic regression.

mod knn;
mod lr;
mod nb;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use knn::{minkowski, Knn};
pub use lr::{LogisticRegression, GRAD_TOLERANCE};
pub use nb::{GaussianNb, DEFAULT_VAR_FLOOR};

use crate::class::{argmax, SentimentClass};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    GaussianNb,
    Knn,
    LogisticRegression,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::GaussianNb, BaselineKind::Knn, BaselineKind::LogisticRegression];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::GaussianNb => "gaussian_nb",
            BaselineKind::Knn => "knn",
            BaselineKind::LogisticRegression => "logistic_regression",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian_nb" | "nb" => Ok(BaselineKind::GaussianNb),
            "knn" | "k_nn" => Ok(BaselineKind::Knn),
            "logistic_regression" | "lr" => Ok(BaselineKind::LogisticRegression),
            _ => Err(Error::Config(format!("unsupported baseline {s:?}"))),
        }
    }
}

/// Hyperparameters for all three kinds. `leaf_size` only tunes tree-based
/// neighbour search; the exhaustive search used here ignores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub n_neighbors: usize,
    pub p: f64,
    pub leaf_size: usize,
    pub c: Option<f64>,
    pub max_iter: usize,
    pub var_floor: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            n_neighbors: 120,
            p: 1.0,
            leaf_size: 35,
            c: Some(10.0),
            max_iter: 1000,
            var_floor: DEFAULT_VAR_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    GaussianNb(GaussianNb),
    Knn(Knn),
    LogisticRegression(LogisticRegression),
}

pub fn train_baseline(kind: BaselineKind, train: &FeatureMatrix, params: &BaselineParams) -> Result<BaselineModel> {
    Ok(match kind {
        BaselineKind::GaussianNb => BaselineModel::GaussianNb(GaussianNb::fit(train, params.var_floor)?),
        BaselineKind::Knn => BaselineModel::Knn(Knn::fit(train, params.n_neighbors, params.p)?),
        BaselineKind::LogisticRegression => {
            BaselineModel::LogisticRegression(LogisticRegression::fit(train, params.c, params.max_iter)?)
        }
    })
}

const MODEL_FILE: &str = "model.json";
const TRAIN_FILE: &str = "train_matrix.bin";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Stored {
    GaussianNb(GaussianNb),
    Knn {
        n_neighbors: usize,
        p: f64,
        train_file: String,
        sha256: String,
    },
    LogisticRegression(LogisticRegression),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::GaussianNb(_) => BaselineKind::GaussianNb,
            BaselineModel::Knn(_) => BaselineKind::Knn,
            BaselineModel::LogisticRegression(_) => BaselineKind::LogisticRegression,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaselineModel::GaussianNb(m) => m.dim(),
            BaselineModel::Knn(m) => m.dim(),
            BaselineModel::LogisticRegression(m) => m.dim,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<(SentimentClass, Vec<f64>)> {
        if x.len() != self.dim() {
            return Err(Error::shape(self.kind().name(), self.dim(), x.len()));
        }
        let scores = match self {
            BaselineModel::GaussianNb(m) => m.scores(x),
            BaselineModel::Knn(m) => m.scores(x),
            BaselineModel::LogisticRegression(m) => m.scores(x),
        };
        let class = SentimentClass::from_index(argmax(&scores)).expect("three scores");
        Ok((class, scores))
    }

    pub fn predict_all(&self, data: &FeatureMatrix) -> Result<Vec<SentimentClass>> {
        data.rows().map(|x| self.predict(x).map(|(c, _)| c)).collect()
    }

    /// Writes `model.json`; KNN additionally dumps its training matrix.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stored = match self {
            BaselineModel::GaussianNb(m) => Stored::GaussianNb(m.clone()),
            BaselineModel::LogisticRegression(m) => Stored::LogisticRegression(m.clone()),
            BaselineModel::Knn(m) => {
                let mut bytes = Vec::new();
                m.train.write_to(&mut bytes).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(TRAIN_FILE);
                std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
                Stored::Knn {
                    n_neighbors: m.n_neighbors,
                    p: m.p,
                    train_file: TRAIN_FILE.into(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                }
            }
        };
        let path = dir.join(MODEL_FILE);
        let json = serde_json::to_string(&stored).expect("model serializes");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stored: Stored = serde_json::from_str(&text).map_err(|source| Error::Json { path, source })?;
        Ok(match stored {
            Stored::GaussianNb(m) => BaselineModel::GaussianNb(m),
            Stored::LogisticRegression(m) => BaselineModel::LogisticRegression(m),
            Stored::Knn {
                n_neighbors,
                p,
                train_file,
                sha256,
            } => {
                let path = dir.join(train_file);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                if hex::encode(Sha256::digest(&bytes)) != sha256 {
                    return Err(Error::Data(format!("{}: checksum mismatch", path.display())));
                }
                BaselineModel::Knn(Knn::fit(&FeatureMatrix::read_from(&bytes[..])?, n_neighbors, p)?)
            }
        })
    }
}

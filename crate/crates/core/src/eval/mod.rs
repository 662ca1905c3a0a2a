//! Confusion matrices, one-vs-rest metrics, and cross-fold aggregation.

mod stats;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use stats::{mean_std, t_quantile_975};

use crate::class::{SentimentClass, NUM_CLASSES};
use crate::error::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

pub fn confusion(preds: &[SentimentClass], labels: &[SentimentClass]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, y) in preds.iter().zip(labels) {
        cm.counts[y.index()][p.index()] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: SentimentClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    let per_class: Vec<ClassMetrics> = SentimentClass::ALL
        .iter()
        .map(|&class| {
            let c = class.index();
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..NUM_CLASSES).map(|t| cm.counts[t][c]).sum();
            let actual: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            ClassMetrics {
                class,
                precision,
                recall,
                f1: f1_score(precision, recall),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    let macro_avg = MacroMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    Ok(MetricsReport {
        accuracy: ratio(cm.trace(), total),
        per_class,
        macro_avg,
        confusion: *cm,
    })
}

impl MetricsReport {
    /// Flat `(name, value)` list in a fixed order, used for aggregation and CSV rows.
    pub fn values(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("accuracy".to_string(), self.accuracy),
            ("macro_precision".to_string(), self.macro_avg.precision),
            ("macro_recall".to_string(), self.macro_avg.recall),
            ("macro_f1".to_string(), self.macro_avg.f1),
        ];
        for m in &self.per_class {
            let name = m.class.name();
            out.push((format!("precision_{name}"), m.precision));
            out.push((format!("recall_{name}"), m.recall));
            out.push((format!("f1_{name}"), m.f1));
        }
        out
    }
}

/// Number of rows each fold contributes to `folds.csv`.
pub const METRICS_PER_FOLD: usize = 4 + 3 * NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub values: Vec<f64>,
}

/// Mean, sample standard deviation and two-sided 95% Student-t interval.
pub fn summarize(name: &str, values: &[f64]) -> Result<MetricSummary> {
    if values.len() < 2 {
        return Err(Error::Data(format!("need at least 2 folds to aggregate, got {}", values.len())));
    }
    let (mean, std) = mean_std(values);
    let n = values.len() as f64;
    let half = t_quantile_975(values.len() - 1) * std / n.sqrt();
    Ok(MetricSummary {
        name: name.to_string(),
        mean,
        std,
        ci_low: mean - half,
        ci_high: mean + half,
        values: values.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_folds: usize,
    pub metrics: Vec<MetricSummary>,
    pub folds: Vec<MetricsReport>,
}

impl AggregateReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Long-format `fold,metric,value` rows, one per fold and metric.
    pub fn write_folds_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["fold", "metric", "value"]).map_err(|e| csv_error(path, e))?;
        for (i, fold) in self.folds.iter().enumerate() {
            for (name, value) in fold.values() {
                w.write_record([i.to_string(), name, value.to_string()])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.len() < 2 {
        return Err(Error::Data(format!("need at least 2 folds to aggregate, got {}", reports.len())));
    }
    let names: Vec<String> = reports[0].values().into_iter().map(|(n, _)| n).collect();
    let metrics = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<f64> = reports.iter().map(|r| r.values()[i].1).collect();
            summarize(name, &values)
        })
        .collect::<Result<_>>()?;
    Ok(AggregateReport {
        n_folds: reports.len(),
        metrics,
        folds: reports.to_vec(),
    })
}

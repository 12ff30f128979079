//! Classification reports, model comparison and the feature-correlation network.

mod network;
pub mod svg;

pub use network::{correlation_network, CorrelationEdge, CorrelationNetwork, FeatureNode};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::Trend;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{0} predictions for {1} actual labels")]
    LengthMismatch(usize, usize),
    #[error("nothing to score")]
    Empty,
    #[error("label {0} is not one of -1, 0, 1")]
    InvalidLabel(i64),
    #[error("reports come from different test sets ({0} vs {1})")]
    TestSetMismatch(String, String),
    #[error("correlation network needs at least 3 rows, got {0}")]
    TooFewRows(usize),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Actual rows of the class.
    pub support: usize,
    /// Rows predicted as the class.
    pub predicted: usize,
    /// The class was never predicted; precision reported as 0.
    pub precision_undefined: bool,
    /// The class never occurs; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// `confusion[actual][predicted]`, classes ordered Down, Flat, Up.
    pub confusion: [[usize; 3]; 3],
    pub per_class: [ClassMetrics; 3],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n: usize,
    /// Identity of the scored test set (hex SHA-256).
    pub test_hash: String,
}

impl ClassReport {
    pub fn class(&self, t: Trend) -> &ClassMetrics {
        &self.per_class[t.index()]
    }

    /// Pooled recall over all rows.
    pub fn micro_recall(&self) -> f64 {
        let tp: usize = (0..3).map(|c| self.confusion[c][c]).sum();
        let support: usize = self.per_class.iter().map(|m| m.support).sum();
        tp as f64 / support as f64
    }

    /// `(name, value)` of every scalar metric, in a fixed order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("accuracy".to_string(), self.accuracy),
            ("macro_precision".into(), self.macro_precision),
            ("macro_recall".into(), self.macro_recall),
            ("macro_f1".into(), self.macro_f1),
        ];
        for t in Trend::ALL {
            let m = self.class(t);
            out.push((format!("{}_precision", t.name()), m.precision));
            out.push((format!("{}_recall", t.name()), m.recall));
            out.push((format!("{}_f1", t.name()), m.f1));
        }
        out
    }
}

/// Hex SHA-256 of the actual labels, one `-1/0/1` per line.
pub fn labels_hash(actual: &[Trend]) -> String {
    let mut h = Sha256::new();
    for t in actual {
        h.update(format!("{}\n", t.value()).as_bytes());
    }
    hex::encode(h.finalize())
}

/// Score predictions against actual labels.
pub fn score(predicted: &[Trend], actual: &[Trend]) -> Result<ClassReport> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, a) in predicted.iter().zip(actual) {
        confusion[a.index()][p.index()] += 1;
    }
    let per_class = [0, 1, 2].map(|c| {
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..3).map(|a| confusion[a][c]).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
            predicted,
            precision_undefined: predicted == 0,
            recall_undefined: support == 0,
        }
    });
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    let trace: usize = (0..3).map(|c| confusion[c][c]).sum();
    Ok(ClassReport {
        confusion,
        per_class,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: trace as f64 / actual.len() as f64,
        n: actual.len(),
        test_hash: labels_hash(actual),
    })
}

/// [`score`] on raw `-1/0/1` labels.
pub fn score_values(predicted: &[i64], actual: &[i64]) -> Result<ClassReport> {
    let conv = |v: &[i64]| -> Result<Vec<Trend>> {
        v.iter()
            .map(|&x| {
                i8::try_from(x)
                    .ok()
                    .and_then(Trend::from_value)
                    .ok_or(EvalError::InvalidLabel(x))
            })
            .collect()
    };
    score(&conv(predicted)?, &conv(actual)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub base: f64,
    pub full: f64,
    /// `full - base`
    pub absolute: f64,
    /// `(full - base) / base`; `None` when `base` is 0.
    pub relative: Option<f64>,
}

pub fn relative_change(base: f64, full: f64) -> Option<f64> {
    (base != 0.0).then(|| (full - base) / base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub test_hash: String,
    pub deltas: Vec<MetricDelta>,
}

impl ReportDelta {
    pub fn get(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }
}

/// Per-metric deltas of `full` over `base`; both must score the same test set.
pub fn compare(base: &ClassReport, full: &ClassReport) -> Result<ReportDelta> {
    if base.test_hash != full.test_hash {
        return Err(EvalError::TestSetMismatch(
            base.test_hash.clone(),
            full.test_hash.clone(),
        ));
    }
    let deltas = base
        .metrics()
        .into_iter()
        .zip(full.metrics())
        .map(|((metric, b), (_, f))| MetricDelta {
            metric,
            base: b,
            full: f,
            absolute: f - b,
            relative: relative_change(b, f),
        })
        .collect();
    Ok(ReportDelta {
        test_hash: base.test_hash.clone(),
        deltas,
    })
}

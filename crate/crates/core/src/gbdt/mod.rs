//! Softmax gradient-boosted trees for the three trend classes.
//!
//! Each round fits one regression tree per class on the gradient
//! `p - y` and hessian `2 p (1 - p)` of the softmax log-loss. Leaf weights
//! are `-lr * G / (H + λ)` with `λ = 1`. Initial margins are the log class
//! priors, so an ensemble without splits predicts the training priors.

mod grid;
mod importance;
pub mod tree;

pub use grid::{forward_folds, grid_search, macro_auc, GridEntry, GridResult, ParamGrid};
pub use importance::{
    permutation_importance, select_features, FeatureStats, ImportanceKind, PermutationMetric,
    PermutationScore, Selection,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use tree::{Tree, TreeParams};

pub const N_CLASSES: usize = 3;
pub const LAMBDA: f64 = 1.0;
const MIN_PRIOR: f64 = 1e-6;
const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training labels contain fewer than two classes")]
    SingleClass,
    #[error("label {0} outside 0..3")]
    Label(usize),
    #[error("no training rows")]
    Empty,
    #[error("column {name}: {message}")]
    Shape { name: String, message: String },
    #[error("non-finite value in column {name} row {row}")]
    NonFinite { name: String, row: usize },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("no fold could be scored for any configuration")]
    NoScorableFolds,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GbdtError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub colsample_bytree: f64,
    pub min_child_weight: f64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            colsample_bytree: 1.0,
            min_child_weight: 1.0,
            learning_rate: 0.3,
            gamma: 0.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl BoostConfig {
    /// Tuned settings of the base model (technical + social features).
    pub fn base_model(seed: u64) -> Self {
        Self {
            n_estimators: 100,
            max_depth: 3,
            colsample_bytree: 0.5,
            min_child_weight: 13.0,
            learning_rate: 0.05,
            gamma: 0.08,
            subsample: 0.5,
            seed,
        }
    }

    /// Tuned settings of the full model (adds network features).
    pub fn full_model(seed: u64) -> Self {
        Self {
            n_estimators: 100,
            max_depth: 5,
            colsample_bytree: 0.5,
            min_child_weight: 13.0,
            learning_rate: 0.01,
            gamma: 0.05,
            subsample: 0.5,
            seed,
        }
    }

    /// A learning rate of 0 is accepted and yields a prior-only model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GbdtError::Config(m.into()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return bad("gamma must be non-negative");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be finite and non-negative");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_child_weight: self.min_child_weight,
            gamma: self.gamma,
            lambda: LAMBDA,
            learning_rate: self.learning_rate,
        }
    }
}

/// Named feature columns with optional class labels (`0..3`).
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(GbdtError::Shape {
                name: "*".into(),
                message: format!("{} names for {} columns", names.len(), columns.len()),
            });
        }
        let n = columns.first().map_or(labels.len(), Vec::len);
        for (name, c) in names.iter().zip(&columns) {
            if c.len() != n {
                return Err(GbdtError::Shape {
                    name: name.clone(),
                    message: format!("{} rows, expected {n}", c.len()),
                });
            }
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(GbdtError::NonFinite {
                    name: name.clone(),
                    row,
                });
            }
        }
        if !labels.is_empty() && labels.len() != n {
            return Err(GbdtError::Shape {
                name: "label".into(),
                message: format!("{} labels for {n} rows", labels.len()),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(GbdtError::Label(l));
        }
        Ok(Self {
            names,
            columns,
            labels,
        })
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        Self::new(m.column_names(), m.column_values(), m.label_indices())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(self.labels.len(), Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Rows `idx` in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.labels[i]).collect()
            },
        }
    }

    pub fn row_range(&self, range: std::ops::Range<usize>) -> Self {
        self.take_rows(&range.collect::<Vec<_>>())
    }

    /// Only the named columns, in the order given.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|x| x == n)
                    .map(|i| self.columns[i].clone())
                    .ok_or_else(|| GbdtError::Schema(format!("missing column {n}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            names: names.to_vec(),
            columns,
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub config: BoostConfig,
    pub feature_names: Vec<String>,
    pub base_margin: [f64; N_CLASSES],
    /// Round-major; tree `i` belongs to class `i % 3`.
    pub trees: Vec<Tree>,
    /// Training log-loss after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<[f64; N_CLASSES]>,
    /// Most probable class; ties go to the lower index.
    pub labels: Vec<usize>,
}

pub fn softmax(m: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = m.map(|x| (x - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

pub fn argmax(p: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

/// Mean negative log-likelihood of the true classes.
pub fn log_loss(probs: &[[f64; N_CLASSES]], labels: &[usize]) -> f64 {
    let s: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(1e-15).ln())
        .sum();
    s / labels.len().max(1) as f64
}

/// Train a softmax ensemble.
pub fn fit(data: &Samples, cfg: &BoostConfig) -> Result<BoostedEnsemble> {
    cfg.validate()?;
    let n = data.n_rows();
    if n == 0 || data.labels.len() != n {
        return Err(GbdtError::Empty);
    }
    let mut counts = [0usize; N_CLASSES];
    for &y in &data.labels {
        counts[y] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(GbdtError::SingleClass);
    }
    let base_margin = counts.map(|c| (c as f64 / n as f64).max(MIN_PRIOR).ln());

    let sorted: Vec<Vec<u32>> = data
        .columns
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
            idx
        })
        .collect();
    let p = data.n_features();
    let n_rows_round = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols_tree = ((cfg.colsample_bytree * p as f64).round() as usize).clamp(1, p.max(1));
    let params = cfg.tree_params();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut margins = vec![base_margin; n];
    let mut trees = Vec::with_capacity(cfg.n_estimators * N_CLASSES);
    let mut train_loss = Vec::with_capacity(cfg.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..cfg.n_estimators {
        let probs: Vec<[f64; N_CLASSES]> = margins.iter().map(softmax).collect();
        let rows: Vec<u32> = if n_rows_round == n {
            (0..n as u32).collect()
        } else {
            let mut r: Vec<u32> = rand::seq::index::sample(&mut rng, n, n_rows_round)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            r.sort_unstable();
            r
        };
        for c in 0..N_CLASSES {
            let features: Vec<usize> = if n_cols_tree >= p {
                (0..p).collect()
            } else {
                let mut f = rand::seq::index::sample(&mut rng, p, n_cols_tree).into_vec();
                f.sort_unstable();
                f
            };
            for i in 0..n {
                let pi = probs[i][c];
                grad[i] = pi - f64::from(u8::from(data.labels[i] == c));
                hess[i] = (2.0 * pi * (1.0 - pi)).max(MIN_HESSIAN);
            }
            let t = tree::grow(
                &data.columns,
                &sorted,
                &features,
                &rows,
                &grad,
                &hess,
                &params,
            );
            for (i, m) in margins.iter_mut().enumerate() {
                m[c] += t.predict(|f| data.columns[f][i]);
            }
            trees.push(t);
        }
        let probs: Vec<[f64; N_CLASSES]> = margins.iter().map(softmax).collect();
        train_loss.push(log_loss(&probs, &data.labels));
    }
    Ok(BoostedEnsemble {
        config: *cfg,
        feature_names: data.names.clone(),
        base_margin,
        trees,
        train_loss,
    })
}

impl BoostedEnsemble {
    pub fn n_rounds(&self) -> usize {
        self.trees.len() / N_CLASSES
    }

    /// Column of `data` feeding each model feature. Every model feature must
    /// be present and no other column may be.
    fn schema(&self, data: &Samples) -> Result<Vec<usize>> {
        if let Some(extra) = data.names.iter().find(|n| !self.feature_names.contains(n)) {
            return Err(GbdtError::Schema(format!("unknown column {extra}")));
        }
        self.feature_names
            .iter()
            .map(|f| {
                data.names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| GbdtError::Schema(format!("missing column {f}")))
            })
            .collect()
    }

    /// Summed margins per class for every row.
    pub fn margins(&self, data: &Samples) -> Result<Vec<[f64; N_CLASSES]>> {
        let map = self.schema(data)?;
        Ok((0..data.n_rows())
            .map(|i| {
                let mut m = self.base_margin;
                for (k, t) in self.trees.iter().enumerate() {
                    m[k % N_CLASSES] += t.predict(|f| data.columns[map[f]][i]);
                }
                m
            })
            .collect())
    }

    pub fn predict(&self, data: &Samples) -> Result<Prediction> {
        let probabilities: Vec<[f64; N_CLASSES]> =
            self.margins(data)?.iter().map(softmax).collect();
        let labels = probabilities.iter().map(argmax).collect();
        Ok(Prediction {
            probabilities,
            labels,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

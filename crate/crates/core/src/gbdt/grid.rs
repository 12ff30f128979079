//! Grid search over boosting parameters with forward-chaining folds.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, BoostConfig, GbdtError, Result, Samples, N_CLASSES};
use crate::stats::roc_auc;

/// Candidate values per parameter. Configurations are enumerated with
/// `n_estimators` varying slowest and `subsample` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub colsample_bytree: Vec<f64>,
    pub min_child_weight: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub gamma: Vec<f64>,
    pub subsample: Vec<f64>,
}

impl ParamGrid {
    pub fn single(c: &BoostConfig) -> Self {
        Self {
            n_estimators: vec![c.n_estimators],
            max_depth: vec![c.max_depth],
            colsample_bytree: vec![c.colsample_bytree],
            min_child_weight: vec![c.min_child_weight],
            learning_rate: vec![c.learning_rate],
            gamma: vec![c.gamma],
            subsample: vec![c.subsample],
        }
    }

    pub fn len(&self) -> usize {
        self.n_estimators.len()
            * self.max_depth.len()
            * self.colsample_bytree.len()
            * self.min_child_weight.len()
            * self.learning_rate.len()
            * self.gamma.len()
            * self.subsample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self, seed: u64) -> Vec<BoostConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &n_estimators in &self.n_estimators {
            for &max_depth in &self.max_depth {
                for &colsample_bytree in &self.colsample_bytree {
                    for &min_child_weight in &self.min_child_weight {
                        for &learning_rate in &self.learning_rate {
                            for &gamma in &self.gamma {
                                for &subsample in &self.subsample {
                                    out.push(BoostConfig {
                                        n_estimators,
                                        max_depth,
                                        colsample_bytree,
                                        min_child_weight,
                                        learning_rate,
                                        gamma,
                                        subsample,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Forward-chaining folds: rows are cut into `n_folds + 1` contiguous
/// blocks; fold `k` trains on blocks `0..=k` and validates on block `k + 1`.
pub fn forward_folds(n: usize, n_folds: usize) -> Vec<(Range<usize>, Range<usize>)> {
    let b = |k: usize| k * n / (n_folds + 1);
    (0..n_folds)
        .map(|k| (0..b(k + 1), b(k + 1)..b(k + 2)))
        .collect()
}

/// Macro one-vs-rest ROC AUC over classes that have both positives and
/// negatives in `labels`. `None` if no class qualifies.
pub fn macro_auc(probs: &[[f64; N_CLASSES]], labels: &[usize]) -> Option<f64> {
    let aucs: Vec<f64> = (0..N_CLASSES)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            roc_auc(&scores, &pos)
        })
        .collect();
    (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: BoostConfig,
    /// `None` for folds that could not be scored.
    pub fold_auc: Vec<Option<f64>>,
    pub mean_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: BoostConfig,
    pub best_index: usize,
    pub entries: Vec<GridEntry>,
    /// Folds skipped because training or validation rows held one class.
    pub skipped_folds: Vec<usize>,
}

fn distinct_classes(labels: &[usize]) -> usize {
    let mut seen = [false; N_CLASSES];
    labels.iter().for_each(|&y| seen[y] = true);
    seen.iter().filter(|&&s| s).count()
}

/// Score every configuration by mean fold AUC and return the best; ties go
/// to the earlier configuration. Configurations are fitted in parallel.
pub fn grid_search(
    data: &Samples,
    grid: &ParamGrid,
    n_folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(GbdtError::EmptyGrid);
    }
    let folds = forward_folds(data.n_rows(), n_folds.max(1));
    let mut skipped = Vec::new();
    let usable: Vec<Option<(Samples, Samples)>> = folds
        .iter()
        .enumerate()
        .map(|(k, (tr, va))| {
            let (train, valid) = (data.row_range(tr.clone()), data.row_range(va.clone()));
            if distinct_classes(&train.labels) < 2 || distinct_classes(&valid.labels) < 2 {
                skipped.push(k);
                None
            } else {
                Some((train, valid))
            }
        })
        .collect();
    let entries: Vec<GridEntry> = grid
        .configs(seed)
        .into_par_iter()
        .map(|config| {
            let fold_auc: Vec<Option<f64>> = usable
                .iter()
                .map(|f| {
                    let (train, valid) = f.as_ref()?;
                    let model = fit(train, &config).ok()?;
                    let pred = model.predict(valid).ok()?;
                    macro_auc(&pred.probabilities, &valid.labels)
                })
                .collect();
            let scored: Vec<f64> = fold_auc.iter().flatten().copied().collect();
            let mean_auc =
                (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
            GridEntry {
                config,
                fold_auc,
                mean_auc,
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(a) = e.mean_auc {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    let (best_index, _) = best.ok_or(GbdtError::NoScorableFolds)?;
    Ok(GridResult {
        best: entries[best_index].config,
        best_index,
        entries,
        skipped_folds: skipped,
    })
}

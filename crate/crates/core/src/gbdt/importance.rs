//! Split-based and permutation feature importances; importance-driven selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::Node;
use super::{fit, log_loss, BoostConfig, BoostedEnsemble, GbdtError, Result, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImportanceKind {
    /// Mean gain of the splits using the feature.
    Gain,
    /// Mean number of training rows reaching those splits.
    Cover,
    /// Number of splits using the feature.
    Weight,
    TotalGain,
    TotalCover,
}

impl ImportanceKind {
    pub const ALL: [ImportanceKind; 5] = [
        ImportanceKind::Gain,
        ImportanceKind::Cover,
        ImportanceKind::Weight,
        ImportanceKind::TotalGain,
        ImportanceKind::TotalCover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImportanceKind::Gain => "gain",
            ImportanceKind::Cover => "cover",
            ImportanceKind::Weight => "weight",
            ImportanceKind::TotalGain => "total_gain",
            ImportanceKind::TotalCover => "total_cover",
        }
    }
}

/// Split accumulators of one feature over the whole ensemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub weight: usize,
    pub total_gain: f64,
    pub total_cover: usize,
}

impl BoostedEnsemble {
    /// One entry per model feature, in schema order.
    pub fn feature_stats(&self) -> Vec<FeatureStats> {
        let mut out = vec![FeatureStats::default(); self.feature_names.len()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature,
                    gain,
                    cover,
                    ..
                } = node
                {
                    let s = &mut out[*feature];
                    s.weight += 1;
                    s.total_gain += gain;
                    s.total_cover += cover;
                }
            }
        }
        out
    }

    /// `(feature, score)` in schema order; unused features score 0.
    pub fn importances(&self, kind: ImportanceKind) -> Vec<(String, f64)> {
        self.feature_names
            .iter()
            .zip(self.feature_stats())
            .map(|(name, s)| {
                let per_split = |total: f64| {
                    if s.weight == 0 {
                        0.0
                    } else {
                        total / s.weight as f64
                    }
                };
                let v = match kind {
                    ImportanceKind::Gain => per_split(s.total_gain),
                    ImportanceKind::Cover => per_split(s.total_cover as f64),
                    ImportanceKind::Weight => s.weight as f64,
                    ImportanceKind::TotalGain => s.total_gain,
                    ImportanceKind::TotalCover => s.total_cover as f64,
                };
                (name.clone(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationMetric {
    /// Drop in accuracy.
    Accuracy,
    /// Increase in cross-entropy (log-loss) of the predicted probabilities.
    Impurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationScore {
    pub feature: String,
    pub mean_drop: f64,
    pub std_drop: f64,
}

fn score(model: &BoostedEnsemble, data: &Samples, metric: PermutationMetric) -> Result<f64> {
    let pred = model.predict(data)?;
    Ok(match metric {
        PermutationMetric::Accuracy => {
            let hits = pred
                .labels
                .iter()
                .zip(&data.labels)
                .filter(|(a, b)| a == b)
                .count();
            hits as f64 / data.labels.len() as f64
        }
        PermutationMetric::Impurity => -log_loss(&pred.probabilities, &data.labels),
    })
}

/// Mean and population std of the score drop when one column at a time is
/// shuffled, over `n_repeats` shuffles drawn from one seeded stream
/// (feature-major order).
pub fn permutation_importance(
    model: &BoostedEnsemble,
    data: &Samples,
    metric: PermutationMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<PermutationScore>> {
    if data.n_rows() == 0 || data.labels.len() != data.n_rows() {
        return Err(GbdtError::Empty);
    }
    let base = score(model, data, metric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let mut drops = Vec::with_capacity(n_repeats);
        let mut shuffled = data.clone();
        for _ in 0..n_repeats {
            shuffled.columns[j].clone_from(&data.columns[j]);
            shuffled.columns[j].shuffle(&mut rng);
            drops.push(base - score(model, &shuffled, metric)?);
        }
        out.push(PermutationScore {
            feature: data.names[j].clone(),
            mean_drop: crate::stats::mean(&drops),
            std_drop: crate::stats::std_pop(&drops),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Chosen columns, in their original order.
    pub selected: Vec<String>,
    /// Every column with its preliminary gain importance, best first.
    pub ranking: Vec<(String, f64)>,
    pub model: BoostedEnsemble,
}

/// Keep the `k` columns with the highest mean split gain in a preliminary
/// fit (ties to the earlier column), then refit on them.
pub fn select_features(data: &Samples, cfg: &BoostConfig, k: usize) -> Result<Selection> {
    if k == 0 {
        return Err(GbdtError::Config("k must be at least 1".into()));
    }
    let prelim = fit(data, cfg)?;
    let mut ranking: Vec<(usize, (String, f64))> = prelim
        .importances(ImportanceKind::Gain)
        .into_iter()
        .enumerate()
        .collect();
    ranking.sort_by(|(ia, (_, a)), (ib, (_, b))| b.total_cmp(a).then(ia.cmp(ib)));
    let mut keep: Vec<usize> = ranking.iter().take(k).map(|(i, _)| *i).collect();
    keep.sort_unstable();
    let selected: Vec<String> = keep.iter().map(|&i| data.names[i].clone()).collect();
    let model = if selected.len() == data.n_features() {
        prelim
    } else {
        fit(&data.select(&selected)?, cfg)?
    };
    Ok(Selection {
        selected,
        ranking: ranking.into_iter().map(|(_, r)| r).collect(),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::tree::Tree;

    fn split(feature: usize, cover: usize, gain: f64, left: usize, right: usize) -> Node {
        Node::Split {
            feature,
            threshold: 0.0,
            left,
            right,
            gain,
            cover,
            hessian: 0.0,
        }
    }

    fn leaf() -> Node {
        Node::Leaf {
            value: 0.0,
            cover: 0,
            hessian: 0.0,
        }
    }

    fn model(trees: Vec<Tree>) -> BoostedEnsemble {
        BoostedEnsemble {
            config: BoostConfig::default(),
            feature_names: vec!["f1".into(), "f2".into(), "f3".into()],
            base_margin: [0.0; 3],
            trees,
            train_loss: Vec::new(),
        }
    }

    #[test]
    fn cover_and_weight_accumulate_across_trees() {
        // f1 decides for 8 rows in the first tree and 4 in the second;
        // it splits 3 times in the first tree and 2 times in the second
        let t1 = Tree {
            nodes: vec![
                split(0, 8, 1.0, 1, 2),
                split(0, 0, 1.0, 3, 4),
                split(0, 0, 1.0, 5, 6),
                leaf(),
                leaf(),
                leaf(),
                leaf(),
            ],
        };
        let t2 = Tree {
            nodes: vec![
                split(0, 4, 3.0, 1, 2),
                split(0, 0, 1.0, 3, 4),
                split(1, 2, 0.5, 5, 6),
                leaf(),
                leaf(),
                leaf(),
                leaf(),
            ],
        };
        let m = model(vec![t1, t2]);
        let get = |kind| m.importances(kind)[0].1;
        assert_eq!(get(ImportanceKind::TotalCover), 12.0);
        assert_eq!(get(ImportanceKind::Weight), 5.0);
        assert_eq!(get(ImportanceKind::TotalGain), 7.0);
        assert_eq!(get(ImportanceKind::Gain), 7.0 / 5.0);
        assert_eq!(get(ImportanceKind::Cover), 12.0 / 5.0);
        assert_eq!(m.importances(ImportanceKind::Gain)[2].1, 0.0);
    }
}

//! Network of significantly correlated features.

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::dataset::{Family, FeatureMatrix};
use crate::stats::pearson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNode {
    pub name: String,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEdge {
    pub a: usize,
    pub b: usize,
    pub r: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationNetwork {
    pub alpha: f64,
    pub nodes: Vec<FeatureNode>,
    pub edges: Vec<CorrelationEdge>,
    /// Constant columns, left out of the network.
    pub excluded: Vec<String>,
}

impl CorrelationNetwork {
    /// Mean `|r|` over edges joining two features of the same family, and
    /// over edges joining different families. `None` when a side has no edge.
    pub fn family_mean_abs_r(&self) -> (Option<f64>, Option<f64>) {
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for e in &self.edges {
            let same = self.nodes[e.a].family == self.nodes[e.b].family;
            if same { &mut intra } else { &mut inter }.push(e.r.abs());
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        (mean(&intra), mean(&inter))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.a == node || e.b == node)
            .count()
    }
}

/// One node per non-constant column; an edge for every pair whose Pearson
/// correlation has two-sided p-value below `alpha`, weighted by `r`.
pub fn correlation_network(m: &FeatureMatrix, alpha: f64) -> Result<CorrelationNetwork> {
    if m.n_rows() < 3 {
        return Err(EvalError::TooFewRows(m.n_rows()));
    }
    let mut nodes = Vec::new();
    let mut values: Vec<&[f64]> = Vec::new();
    let mut excluded = Vec::new();
    for c in &m.columns {
        let first = c.values[0];
        if c.values.iter().all(|&v| v == first) {
            excluded.push(c.name.clone());
        } else {
            nodes.push(FeatureNode {
                name: c.name.clone(),
                family: c.family,
            });
            values.push(&c.values);
        }
    }
    let mut edges = Vec::new();
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            if let Ok((r, p_value)) = pearson(values[a], values[b]) {
                if p_value < alpha {
                    edges.push(CorrelationEdge { a, b, r, p_value });
                }
            }
        }
    }
    Ok(CorrelationNetwork {
        alpha,
        nodes,
        edges,
        excluded,
    })
}

//! PageRank by power iteration over distinct directed edges.

use serde::{Deserialize, Serialize};

use crate::graph::GraphSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    /// One score per local node; sums to 1.
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` was reached before the L1 change dropped below `tol`.
    pub converged: bool,
}

impl PageRankResult {
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.scores)
    }

    pub fn std(&self) -> f64 {
        crate::stats::std_pop(&self.scores)
    }
}

/// Uniform teleport; mass of dangling nodes is spread uniformly.
pub fn pagerank(g: &GraphSnapshot, cfg: &PageRankConfig) -> PageRankResult {
    let n = g.n_nodes();
    if n == 0 {
        return PageRankResult {
            scores: Vec::new(),
            iterations: 0,
            converged: true,
        };
    }
    let nf = n as f64;
    let d = cfg.damping;
    let out_deg: Vec<f64> = (0..n as u32).map(|u| g.out_edges(u).len() as f64).collect();
    let mut pr = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&u| out_deg[u] == 0.0).map(|u| pr[u]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for e in g.edges() {
            let s = e.src as usize;
            next[e.dst as usize] += d * pr[s] / out_deg[s];
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta: f64 = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pr, &mut next);
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    PageRankResult {
        scores: pr,
        iterations,
        converged,
    }
}

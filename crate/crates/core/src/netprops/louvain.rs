//! Louvain modularity optimization (local moves + aggregation).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::UndirectedGraph;

/// Minimum modularity improvement for a sweep or level to count.
pub const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainResult {
    /// Community label per node, relabeled `0..n_communities` in first-seen order.
    pub partition: Vec<u32>,
    /// Modularity of `partition`, evaluated directly on the input graph.
    pub modularity: f64,
    pub n_communities: usize,
    /// Modularity after each aggregation level; non-decreasing.
    pub level_modularity: Vec<f64>,
    pub seed: u64,
}

/// Newman-Girvan modularity of a partition of an unweighted undirected graph:
/// `(1/m) * Σ_c [ L_c - d_c² / 4m ]`, i.e. observed minus expected
/// intra-community edges over the edge count. 0 for an edgeless graph.
pub fn modularity(g: &UndirectedGraph, partition: &[u32]) -> f64 {
    let m = g.n_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = partition.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut intra = vec![0.0; k];
    let mut deg = vec![0.0; k];
    for u in 0..g.n_nodes() as u32 {
        deg[partition[u as usize] as usize] += g.degree(u) as f64;
    }
    for (u, v) in g.edges() {
        if partition[u as usize] == partition[v as usize] {
            intra[partition[u as usize] as usize] += 1.0;
        }
    }
    intra
        .iter()
        .zip(&deg)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

/// Weighted graph used between aggregation levels. `loops[i]` is the weight
/// of edges internal to super-node `i` (each counted once).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn from_graph(g: &UndirectedGraph) -> Self {
        let n = g.n_nodes();
        let adj = (0..n as u32)
            .map(|u| g.neighbors(u).iter().map(|&v| (v as usize, 1.0)).collect())
            .collect();
        Self {
            adj,
            loops: vec![0.0; n],
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.loops[i]
    }

    /// Modularity of `comm` on this level's weighted graph.
    fn quality(&self, comm: &[usize], tot: &[f64], m2: f64) -> f64 {
        let mut internal = vec![0.0; tot.len()];
        for i in 0..self.n() {
            internal[comm[i]] += 2.0 * self.loops[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] {
                    internal[comm[i]] += w;
                }
            }
        }
        internal
            .iter()
            .zip(tot)
            .map(|(inn, t)| inn / m2 - (t / m2).powi(2))
            .sum()
    }

    /// Local-move phase. Returns the community of every node and whether any node moved.
    fn local_moves(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.n();
        let k: Vec<f64> = (0..n).map(|i| self.strength(i)).collect();
        let m2: f64 = k.iter().sum();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = k.clone();
        let mut order: Vec<usize> = (0..n).collect();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        let mut q = self.quality(&comm, &tot, m2);
        loop {
            order.shuffle(rng);
            let mut moved = false;
            for &i in &order {
                let own = comm[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[own] -= k[i];
                let gain = |c: usize, link_c: f64| link_c - tot[c] * k[i] / m2;
                let mut best = own;
                let mut best_gain = gain(own, link[own]);
                for &c in &touched {
                    let g = gain(c, link[c]);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += k[i];
                if best != own {
                    comm[i] = best;
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                link[own] = 0.0;
                touched.clear();
            }
            if !moved {
                break;
            }
            moved_any = true;
            let q_new = self.quality(&comm, &tot, m2);
            let improved = q_new - q;
            q = q_new;
            if improved <= MIN_GAIN {
                break;
            }
        }
        (comm, moved_any)
    }

    /// Collapse communities into super-nodes. `comm` must be dense `0..k`.
    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut loops = vec![0.0; k];
        let mut maps: Vec<rustc_hash::FxHashMap<usize, f64>> = vec![Default::default(); k];
        for i in 0..self.n() {
            let ci = comm[i];
            loops[ci] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    // each internal edge is seen from both ends
                    loops[ci] += w / 2.0;
                } else {
                    *maps[ci].entry(cj).or_default() += w;
                }
            }
        }
        let adj = maps
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_unstable_by_key(|&(j, _)| j);
                v
            })
            .collect();
        Level { adj, loops }
    }
}

/// Relabel to `0..k` in order of first appearance.
fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    (out, next)
}

/// Run Louvain with resolution 1. Node sweep order is shuffled from `seed`.
pub fn louvain(g: &UndirectedGraph, seed: u64) -> LouvainResult {
    let n = g.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level = Level::from_graph(g);
    let mut trace = Vec::new();
    let singletons: Vec<u32> = (0..n as u32).collect();
    let mut best_q = modularity(g, &singletons);
    if g.n_edges() > 0 {
        loop {
            let (comm, moved) = level.local_moves(&mut rng);
            if !moved {
                break;
            }
            let (comm, k) = densify(&comm);
            let candidate: Vec<usize> = membership.iter().map(|&c| comm[c]).collect();
            let q = modularity(g, &candidate.iter().map(|&c| c as u32).collect::<Vec<_>>());
            if q <= best_q + MIN_GAIN {
                break;
            }
            membership = candidate;
            best_q = q;
            trace.push(q);
            if k == level.n() {
                break;
            }
            level = level.aggregate(&comm, k);
        }
    }
    let (dense, k) = densify(&membership);
    let partition: Vec<u32> = dense.into_iter().map(|c| c as u32).collect();
    let q = modularity(g, &partition);
    LouvainResult {
        partition,
        modularity: q,
        n_communities: k,
        level_modularity: trace,
        seed,
    }
}

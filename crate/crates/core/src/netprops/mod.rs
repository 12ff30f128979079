//! Network-property feature family.
//!
//! Directed quantities (reciprocity, PageRank, degree sequences) use the
//! snapshot's distinct directed edges. Assortativity, clustering, modularity
//! and the largest component use the undirected simple view, where
//! self-loops are dropped. Features that are undefined for a given graph
//! (zero variance, too few edges, ...) are `None`.

mod louvain;
mod pagerank;

pub use louvain::{louvain, modularity, LouvainResult};
pub use pagerank::{pagerank, PageRankConfig, PageRankResult};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{degree_sequences, undirected_view, DayRange, GraphSnapshot, UndirectedGraph};
use crate::ingest::day_of_date;
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetPropsConfig {
    pub pagerank: PageRankConfig,
    pub louvain_seed: u64,
}

impl Default for NetPropsConfig {
    fn default() -> Self {
        Self {
            pagerank: PageRankConfig::default(),
            louvain_seed: 42,
        }
    }
}

/// Feature vector of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFeatures {
    pub interval: DayRange,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub degree_mean: Option<f64>,
    pub degree_std: Option<f64>,
    pub neighbor_degree_mean: Option<f64>,
    pub degree_slope: Option<f64>,
    pub active_ratio: Option<f64>,
    pub assortativity: Option<f64>,
    pub avg_clustering: Option<f64>,
    pub modularity: Option<f64>,
    pub n_communities: Option<usize>,
    pub reciprocity: Option<f64>,
    pub pagerank_mean: Option<f64>,
    pub pagerank_std: Option<f64>,
    pub lcc_fraction: Option<f64>,
    /// False if PageRank hit its iteration cap.
    pub pagerank_converged: bool,
}

impl NetworkFeatures {
    /// Column names in the order of [`NetworkFeatures::values`].
    pub const COLUMNS: [&'static str; 15] = [
        "n_nodes",
        "n_edges",
        "degree_mean",
        "degree_std",
        "neighbor_degree_mean",
        "degree_slope",
        "active_ratio",
        "assortativity",
        "avg_clustering",
        "modularity",
        "n_communities",
        "reciprocity",
        "pagerank_mean",
        "pagerank_std",
        "lcc_fraction",
    ];

    pub fn values(&self) -> [Option<f64>; 15] {
        [
            Some(self.n_nodes as f64),
            Some(self.n_edges as f64),
            self.degree_mean,
            self.degree_std,
            self.neighbor_degree_mean,
            self.degree_slope,
            self.active_ratio,
            self.assortativity,
            self.avg_clustering,
            self.modularity,
            self.n_communities.map(|c| c as f64),
            self.reciprocity,
            self.pagerank_mean,
            self.pagerank_std,
            self.lcc_fraction,
        ]
    }
}

/// Pearson correlation of the degrees at both ends of every undirected edge
/// (each edge contributes both orientations).
pub fn assortativity(u: &UndirectedGraph) -> Option<f64> {
    let m = u.n_edges();
    if m < 2 {
        return None;
    }
    let (mut sx, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in u.edges() {
        let (da, db) = (u.degree(a) as f64, u.degree(b) as f64);
        sx += da + db;
        sxx += da * da + db * db;
        sxy += 2.0 * da * db;
    }
    let n = 2.0 * m as f64;
    let mean = sx / n;
    let var = sxx / n - mean * mean;
    if var <= 1e-12 * mean * mean.max(1.0) {
        return None;
    }
    Some(((sxy / n - mean * mean) / var).clamp(-1.0, 1.0))
}

/// Triangles through every node, by degree-ordered forward intersection.
pub fn triangles_per_node(u: &UndirectedGraph) -> Vec<u64> {
    let n = u.n_nodes();
    let rank_key = |v: u32| (u.degree(v), v);
    // forward adjacency: neighbors of higher rank, sorted by rank
    let forward: Vec<Vec<u32>> = (0..n as u32)
        .map(|v| {
            let mut f: Vec<u32> = u
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&w| rank_key(w) > rank_key(v))
                .collect();
            f.sort_unstable_by_key(|&w| rank_key(w));
            f
        })
        .collect();
    let mut t = vec![0u64; n];
    for v in 0..n {
        for &w in &forward[v] {
            let (a, b) = (&forward[v], &forward[w as usize]);
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                match rank_key(a[i]).cmp(&rank_key(b[j])) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        t[v] += 1;
                        t[w as usize] += 1;
                        t[a[i] as usize] += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    t
}

/// Mean local clustering `2 L_i / (k_i (k_i - 1))` over all nodes; nodes of
/// degree below 2 contribute 0. An empty graph gives 0.
pub fn avg_clustering(u: &UndirectedGraph) -> f64 {
    let n = u.n_nodes();
    if n == 0 {
        return 0.0;
    }
    let t = triangles_per_node(u);
    let sum: f64 = (0..n)
        .map(|v| {
            let k = u.degree(v as u32) as f64;
            if k < 2.0 {
                0.0
            } else {
                2.0 * t[v] as f64 / (k * (k - 1.0))
            }
        })
        .sum();
    sum / n as f64
}

/// Fraction of non-loop directed edges whose reverse edge also exists.
pub fn reciprocity(g: &GraphSnapshot) -> Option<f64> {
    let mut total = 0usize;
    let mut mutual = 0usize;
    for e in g.edges().iter().filter(|e| e.src != e.dst) {
        total += 1;
        if g.has_edge(e.dst, e.src) {
            mutual += 1;
        }
    }
    (total > 0).then(|| mutual as f64 / total as f64)
}

/// Sizes of the connected components of the undirected view.
pub fn component_sizes(u: &UndirectedGraph) -> Vec<usize> {
    let n = u.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in u.edges() {
        let (ra, rb) = (find(&mut parent, a as usize), find(&mut parent, b as usize));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut sizes = vec![0usize; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        sizes[r] += 1;
    }
    sizes.retain(|&s| s > 0);
    sizes
}

pub fn lcc_fraction(u: &UndirectedGraph) -> Option<f64> {
    let n = u.n_nodes();
    if n == 0 {
        return None;
    }
    let largest = component_sizes(u).into_iter().max().unwrap_or(0);
    Some(largest as f64 / n as f64)
}

/// Log-spaced bin edges per doubling of degree.
const BINS_PER_OCTAVE: f64 = 4.0;
/// Edges with fewer nodes at or above them are too noisy to fit.
const MIN_TAIL_COUNT: usize = 10;

/// Least-squares slope of `ln P(K >= k)` against `ln k`, with `k` taken at
/// logarithmically spaced integer edges between the smallest and largest
/// positive degree, skipping edges with fewer than 10 nodes at or above
/// them. `None` with fewer than 3 distinct positive degrees or fewer than 3
/// usable edges.
pub fn ccdf_log_slope(degrees: &[u64]) -> Option<f64> {
    let mut deg: Vec<u64> = degrees.iter().copied().filter(|&d| d > 0).collect();
    deg.sort_unstable();
    let mut distinct = deg.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    let (kmin, kmax) = (deg[0] as f64, *deg.last().expect("non-empty") as f64);
    let n = deg.len() as f64;
    let step = 2f64.powf(1.0 / BINS_PER_OCTAVE);
    let mut edges: Vec<u64> = Vec::new();
    let mut k = kmin;
    while k <= kmax * (1.0 + 1e-12) {
        let e = k.round() as u64;
        if edges.last() != Some(&e) {
            edges.push(e);
        }
        k *= step;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = edges
        .iter()
        .filter_map(|&e| {
            let at_least = deg.len() - deg.partition_point(|&d| d < e);
            (at_least >= MIN_TAIL_COUNT.min(deg.len()))
                .then(|| ((e as f64).ln(), (at_least as f64 / n).ln()))
        })
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    crate::stats::ols_slope(&xs, &ys)
}

/// Log-log CCDF slope of the total-degree distribution.
pub fn degree_slope(g: &GraphSnapshot) -> Option<f64> {
    ccdf_log_slope(&degree_sequences(g).total)
}

/// Active addresses over all addresses seen so far.
pub fn active_ratio(g: &GraphSnapshot) -> Option<f64> {
    (g.cumulative_address_count > 0).then(|| g.n_nodes() as f64 / g.cumulative_address_count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    pub std: f64,
    /// Mean over non-isolated nodes of the average total degree of their
    /// undirected neighbors; `None` when every node is isolated.
    pub neighbor_mean: Option<f64>,
}

/// Moments of the total-degree sequence (population std).
pub fn degree_stats(g: &GraphSnapshot, u: &UndirectedGraph) -> Option<DegreeStats> {
    if g.n_nodes() == 0 {
        return None;
    }
    let total: Vec<f64> = degree_sequences(g)
        .total
        .into_iter()
        .map(|d| d as f64)
        .collect();
    let per_node: Vec<f64> = (0..u.n_nodes() as u32)
        .filter(|&v| u.degree(v) > 0)
        .map(|v| {
            let nb = u.neighbors(v);
            nb.iter().map(|&w| total[w as usize]).sum::<f64>() / nb.len() as f64
        })
        .collect();
    Some(DegreeStats {
        mean: crate::stats::mean(&total),
        std: crate::stats::std_pop(&total),
        neighbor_mean: (!per_node.is_empty()).then(|| crate::stats::mean(&per_node)),
    })
}

/// All network features of one snapshot.
pub fn compute_features(g: &GraphSnapshot, cfg: &NetPropsConfig) -> NetworkFeatures {
    let u = undirected_view(g);
    let dstats = degree_stats(g, &u);
    let (modularity, n_communities) = if u.n_edges() > 0 {
        let r = louvain(&u, cfg.louvain_seed);
        (Some(r.modularity), Some(r.n_communities))
    } else {
        (None, None)
    };
    let pr = (g.n_nodes() > 0).then(|| pagerank(g, &cfg.pagerank));
    NetworkFeatures {
        interval: g.interval,
        n_nodes: g.n_nodes(),
        n_edges: g.n_edges(),
        degree_mean: dstats.map(|d| d.mean),
        degree_std: dstats.map(|d| d.std),
        neighbor_degree_mean: dstats.and_then(|d| d.neighbor_mean),
        degree_slope: degree_slope(g),
        active_ratio: active_ratio(g),
        assortativity: assortativity(&u),
        avg_clustering: (g.n_nodes() > 0).then(|| avg_clustering(&u)),
        modularity,
        n_communities,
        reciprocity: reciprocity(g),
        pagerank_mean: pr.as_ref().map(PageRankResult::mean),
        pagerank_std: pr.as_ref().map(PageRankResult::std),
        lcc_fraction: lcc_fraction(&u),
        pagerank_converged: pr.as_ref().is_none_or(|p| p.converged),
    }
}

/// Features of every snapshot, computed in parallel on the current rayon pool.
pub fn compute_all(snapshots: &[GraphSnapshot], cfg: &NetPropsConfig) -> Vec<NetworkFeatures> {
    snapshots
        .par_iter()
        .map(|g| compute_features(g, cfg))
        .collect()
}

/// Spread interval features over the days of `days`: each day takes the
/// features of the latest interval that ended on or before it. Days before
/// the first interval ends are omitted.
pub fn daily_view(features: &[NetworkFeatures], days: DayRange) -> Vec<NetworkFeatures> {
    let mut sorted: Vec<&NetworkFeatures> = features.iter().collect();
    sorted.sort_by_key(|f| f.interval.end);
    let mut out = Vec::new();
    let mut k = 0;
    for day in days.start..=days.end {
        while k < sorted.len() && sorted[k].interval.end <= day {
            k += 1;
        }
        if k > 0 {
            out.push(NetworkFeatures {
                interval: DayRange::day(day),
                ..sorted[k - 1].clone()
            });
        }
    }
    out
}

fn csv_header() -> Vec<String> {
    ["start", "end"]
        .into_iter()
        .chain(NetworkFeatures::COLUMNS)
        .chain(["pagerank_converged"])
        .map(String::from)
        .collect()
}

/// `start,end,<COLUMNS...>,pagerank_converged`, one row per snapshot.
pub fn write_csv<W: std::io::Write>(features: &[NetworkFeatures], w: W) -> table::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header())?;
    for f in features {
        let mut rec = vec![
            f.interval.start_date().to_string(),
            f.interval.end_date().to_string(),
        ];
        rec.push(f.n_nodes.to_string());
        rec.push(f.n_edges.to_string());
        rec.extend(f.values()[2..].iter().map(|&v| table::format_opt(v)));
        rec.push(f.pagerank_converged.to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> table::Result<Vec<NetworkFeatures>> {
    let mut rdr = csv::Reader::from_reader(r);
    table::expect_header(rdr.headers()?, &csv_header())?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let opt = |j: usize| table::parse_opt(&rec[j], line, csv_header()[j].as_str());
        let start: chrono::NaiveDate = table::parse(&rec[0], line, "start")?;
        let end: chrono::NaiveDate = table::parse(&rec[1], line, "end")?;
        if end < start {
            return Err(table::TableError::Parse {
                line,
                message: format!("interval ends {end} before it starts {start}"),
            });
        }
        out.push(NetworkFeatures {
            interval: DayRange::new(day_of_date(start), day_of_date(end)),
            n_nodes: table::parse(&rec[2], line, "n_nodes")?,
            n_edges: table::parse(&rec[3], line, "n_edges")?,
            degree_mean: opt(4)?,
            degree_std: opt(5)?,
            neighbor_degree_mean: opt(6)?,
            degree_slope: opt(7)?,
            active_ratio: opt(8)?,
            assortativity: opt(9)?,
            avg_clustering: opt(10)?,
            modularity: opt(11)?,
            n_communities: match rec[12].trim() {
                "" => None,
                c => Some(table::parse(c, line, "n_communities")?),
            },
            reciprocity: opt(13)?,
            pagerank_mean: opt(14)?,
            pagerank_std: opt(15)?,
            lcc_fraction: opt(16)?,
            pagerank_converged: table::parse(&rec[17], line, "pagerank_converged")?,
        });
    }
    Ok(out)
}

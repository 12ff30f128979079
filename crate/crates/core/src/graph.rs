//! Directed, count-weighted address graphs per time interval.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{date_of_day, AddressBook, AddressId, TransactionRecord};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("intervals overlap: {0} and {1}")]
    Overlap(DayRange, DayRange),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad edge-list line {0}: {1}")]
    Parse(usize, String),
}

/// Inclusive range of UTC epoch-day numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DayRange {
    pub start: i64,
    pub end: i64,
}

impl DayRange {
    pub fn new(start: i64, end: i64) -> Self {
        assert!(start <= end, "day range start {start} after end {end}");
        Self { start, end }
    }

    pub fn day(d: i64) -> Self {
        Self { start: d, end: d }
    }

    pub fn contains(&self, day: i64) -> bool {
        (self.start..=self.end).contains(&day)
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_date(&self) -> NaiveDate {
        date_of_day(self.start)
    }

    pub fn end_date(&self) -> NaiveDate {
        date_of_day(self.end)
    }
}

impl std::fmt::Display for DayRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start_date(), self.end_date())
    }
}

/// Directed edge between local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    /// Number of transactions `src -> dst` inside the interval.
    pub weight: u64,
}

/// Immutable directed address graph for one interval.
///
/// Nodes are stored sorted by [`AddressId`] and edges sorted by
/// `(src, dst)` in local indices, which makes the edge list a CSR of out-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    pub interval: DayRange,
    nodes: Vec<AddressId>,
    edges: Vec<Edge>,
    out_offsets: Vec<usize>,
    /// Distinct addresses seen from the start of the stream up to `interval.end`.
    pub cumulative_address_count: u64,
}

impl GraphSnapshot {
    /// Build from `(source, target)` pairs already restricted to the interval.
    pub fn from_pairs(
        interval: DayRange,
        mut pairs: Vec<(AddressId, AddressId)>,
        cumulative_address_count: u64,
    ) -> Self {
        pairs.sort_unstable();
        let mut nodes: Vec<AddressId> = pairs.iter().flat_map(|&(s, t)| [s, t]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let local = |a: AddressId| nodes.binary_search(&a).expect("endpoint is a node") as u32;
        let mut edges: Vec<Edge> = Vec::new();
        for (s, t) in pairs {
            let (src, dst) = (local(s), local(t));
            match edges.last_mut() {
                Some(e) if e.src == src && e.dst == dst => e.weight += 1,
                _ => edges.push(Edge {
                    src,
                    dst,
                    weight: 1,
                }),
            }
        }
        Self::from_parts(interval, nodes, edges, cumulative_address_count)
    }

    fn from_parts(
        interval: DayRange,
        nodes: Vec<AddressId>,
        edges: Vec<Edge>,
        cumulative_address_count: u64,
    ) -> Self {
        let mut out_offsets = vec![0usize; nodes.len() + 1];
        for e in &edges {
            out_offsets[e.src as usize + 1] += 1;
        }
        for i in 0..nodes.len() {
            out_offsets[i + 1] += out_offsets[i];
        }
        Self {
            interval,
            nodes,
            edges,
            out_offsets,
            cumulative_address_count,
        }
    }

    pub fn empty(interval: DayRange, cumulative_address_count: u64) -> Self {
        Self::from_parts(interval, Vec::new(), Vec::new(), cumulative_address_count)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of distinct directed edges (self-loops included).
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[AddressId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn address(&self, local: u32) -> AddressId {
        self.nodes[local as usize]
    }

    pub fn local_index(&self, id: AddressId) -> Option<u32> {
        self.nodes.binary_search(&id).ok().map(|i| i as u32)
    }

    pub fn out_edges(&self, local: u32) -> &[Edge] {
        let i = local as usize;
        &self.edges[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Weight of `source -> target`, 0 when absent.
    pub fn weight(&self, source: AddressId, target: AddressId) -> u64 {
        let (Some(s), Some(t)) = (self.local_index(source), self.local_index(target)) else {
            return 0;
        };
        let out = self.out_edges(s);
        out.binary_search_by_key(&t, |e| e.dst)
            .map(|i| out[i].weight)
            .unwrap_or(0)
    }

    pub fn has_edge(&self, src: u32, dst: u32) -> bool {
        self.out_edges(src)
            .binary_search_by_key(&dst, |e| e.dst)
            .is_ok()
    }

    /// Edges as `(source, target, weight)` in global address ids.
    pub fn global_edges(&self) -> impl Iterator<Item = (AddressId, AddressId, u64)> + '_ {
        self.edges.iter().map(|e| {
            (
                self.nodes[e.src as usize],
                self.nodes[e.dst as usize],
                e.weight,
            )
        })
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Build one snapshot from a timestamp-sorted stream. Transactions dated
/// before the interval only contribute to the cumulative address count.
pub fn build_snapshot(txs: &[TransactionRecord], interval: DayRange) -> GraphSnapshot {
    let mut seen = rustc_hash::FxHashSet::default();
    let mut pairs = Vec::new();
    for tx in txs {
        let day = tx.day();
        if day > interval.end {
            break;
        }
        seen.insert(tx.source);
        seen.insert(tx.target);
        if day >= interval.start {
            pairs.push((tx.source, tx.target));
        }
    }
    GraphSnapshot::from_pairs(interval, pairs, seen.len() as u64)
}

/// One snapshot per day over `range` (the stream's own span when `None`).
/// Days are built in parallel; output order is by day.
pub fn daily_snapshots(txs: &[TransactionRecord], range: Option<DayRange>) -> Vec<GraphSnapshot> {
    let Some(range) = range.or_else(|| Some(DayRange::new(txs.first()?.day(), txs.last()?.day())))
    else {
        return Vec::new();
    };
    let cumulative = cumulative_counts(txs, range);
    (range.start..=range.end)
        .into_par_iter()
        .map(|day| {
            let lo = txs.partition_point(|t| t.day() < day);
            let hi = txs.partition_point(|t| t.day() <= day);
            let pairs = txs[lo..hi].iter().map(|t| (t.source, t.target)).collect();
            GraphSnapshot::from_pairs(
                DayRange::day(day),
                pairs,
                cumulative[(day - range.start) as usize],
            )
        })
        .collect()
}

/// Distinct addresses seen up to and including each day of `range`.
fn cumulative_counts(txs: &[TransactionRecord], range: DayRange) -> Vec<u64> {
    let max_id = txs
        .iter()
        .map(|t| t.source.0.max(t.target.0))
        .max()
        .map_or(0, |m| m as usize + 1);
    let mut seen = vec![false; max_id];
    let mut distinct = 0u64;
    let mut out = Vec::with_capacity(range.len());
    let mut i = 0;
    for day in range.start..=range.end {
        while i < txs.len() && txs[i].day() <= day {
            for a in [txs[i].source, txs[i].target] {
                if !seen[a.index()] {
                    seen[a.index()] = true;
                    distinct += 1;
                }
            }
            i += 1;
        }
        out.push(distinct);
    }
    out
}

/// Merge snapshots of disjoint intervals: nodes union, weights add.
pub fn merge(a: &GraphSnapshot, b: &GraphSnapshot) -> Result<GraphSnapshot, GraphError> {
    if a.interval.start <= b.interval.end && b.interval.start <= a.interval.end {
        return Err(GraphError::Overlap(a.interval, b.interval));
    }
    let interval = DayRange::new(
        a.interval.start.min(b.interval.start),
        a.interval.end.max(b.interval.end),
    );
    let mut weighted: Vec<(AddressId, AddressId, u64)> =
        a.global_edges().chain(b.global_edges()).collect();
    weighted.sort_unstable_by_key(|&(s, t, _)| (s, t));
    let mut nodes: Vec<AddressId> = a.nodes.iter().chain(&b.nodes).copied().collect();
    nodes.sort_unstable();
    nodes.dedup();
    let local = |x: AddressId| nodes.binary_search(&x).expect("endpoint is a node") as u32;
    let mut edges: Vec<Edge> = Vec::with_capacity(weighted.len());
    for (s, t, w) in weighted {
        let (src, dst) = (local(s), local(t));
        match edges.last_mut() {
            Some(e) if e.src == src && e.dst == dst => e.weight += w,
            _ => edges.push(Edge {
                src,
                dst,
                weight: w,
            }),
        }
    }
    let cumulative = a.cumulative_address_count.max(b.cumulative_address_count);
    Ok(GraphSnapshot::from_parts(
        interval, nodes, edges, cumulative,
    ))
}

/// Merge a run of consecutive snapshots into one.
pub fn merge_all(snapshots: &[GraphSnapshot]) -> Result<Option<GraphSnapshot>, GraphError> {
    let mut iter = snapshots.iter();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    let mut acc = first.clone();
    for s in iter {
        acc = merge(&acc, s)?;
    }
    Ok(Some(acc))
}

/// Per-node degree counts over distinct directed edges, indexed by local node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DegreeSequences {
    pub in_degree: Vec<u64>,
    pub out_degree: Vec<u64>,
    pub total: Vec<u64>,
}

pub fn degree_sequences(g: &GraphSnapshot) -> DegreeSequences {
    let n = g.n_nodes();
    let mut in_degree = vec![0u64; n];
    let mut out_degree = vec![0u64; n];
    for e in g.edges() {
        out_degree[e.src as usize] += 1;
        in_degree[e.dst as usize] += 1;
    }
    let total = in_degree
        .iter()
        .zip(&out_degree)
        .map(|(i, o)| i + o)
        .collect();
    DegreeSequences {
        in_degree,
        out_degree,
        total,
    }
}

/// Undirected simple graph in CSR form (sorted neighbor lists, no self-loops).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl UndirectedGraph {
    /// Build from an arbitrary edge list; duplicates, orientation and
    /// self-loops are normalized away.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut pairs: Vec<(u32, u32)> = edges
            .into_iter()
            .filter(|(u, v)| u != v)
            .flat_map(|(u, v)| [(u, v), (v, u)])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, v)| v).collect();
        Self { offsets, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.neighbors[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    pub fn degree(&self, u: u32) -> usize {
        self.offsets[u as usize + 1] - self.offsets[u as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_nodes() as u32).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| u < v)
                .map(move |&v| (u, v))
        })
    }
}

/// Symmetrized view of a snapshot, self-loops dropped.
pub fn undirected_view(g: &GraphSnapshot) -> UndirectedGraph {
    UndirectedGraph::from_edges(g.n_nodes(), g.edges().iter().map(|e| (e.src, e.dst)))
}

/// Write the snapshot as `src_id,dst_id,weight` (global address ids).
pub fn write_edge_list<W: Write>(g: &GraphSnapshot, mut w: W) -> std::io::Result<()> {
    writeln!(w, "src_id,dst_id,weight")?;
    for (s, t, weight) in g.global_edges() {
        writeln!(w, "{},{},{}", s.0, t.0, weight)?;
    }
    Ok(())
}

/// Companion node dictionary (`id,address`) for cached edge lists.
pub fn write_node_dictionary<W: Write>(book: &AddressBook, mut w: W) -> std::io::Result<()> {
    writeln!(w, "id,address")?;
    for i in 0..book.len() {
        writeln!(w, "{},{}", i, book.name(AddressId(i as u32)))?;
    }
    Ok(())
}

/// Read a cached edge list back into a snapshot.
pub fn read_edge_list<R: BufRead>(
    r: R,
    interval: DayRange,
    cumulative_address_count: u64,
) -> Result<GraphSnapshot, GraphError> {
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || GraphError::Parse(i + 1, line.clone());
        let mut it = line.split(',').map(|f| f.trim().parse::<u64>());
        let (Some(Ok(s)), Some(Ok(t)), Some(Ok(w))) = (it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let (s, t) = (AddressId(s as u32), AddressId(t as u32));
        pairs.extend(std::iter::repeat_n((s, t), w as usize));
    }
    Ok(GraphSnapshot::from_pairs(
        interval,
        pairs,
        cumulative_address_count,
    ))
}

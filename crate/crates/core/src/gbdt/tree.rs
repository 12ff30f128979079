//! Regression trees grown level by level with exact greedy split search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        /// Training rows reaching the node.
        cover: usize,
        hessian: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        cover: usize,
        hessian: f64,
    },
}

impl Node {
    pub fn cover(&self) -> usize {
        match self {
            Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
        }
    }

    pub fn hessian(&self) -> f64 {
        match self {
            Node::Leaf { hessian, .. } | Node::Split { hessian, .. } => *hessian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Output for a row whose feature `f` is `x(f)`.
    pub fn predict(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x(*feature) < *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
}

/// Structure score gain of splitting `(g, h)` into left and right parts.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)
}

/// Threshold strictly above `lo` and at most `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m <= lo {
        hi
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

/// Scan state of one frontier node while sweeping a feature.
#[derive(Debug, Clone, Copy)]
struct Scan {
    left: Stats,
    last: Option<f64>,
}

const NONE: usize = usize::MAX;
/// Gains within this relative margin of the incumbent count as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Whether `gain` beats the incumbent best gain under [`TIE_TOLERANCE`].
pub fn beats(gain: f64, best: f64) -> bool {
    gain > best + TIE_TOLERANCE * best.abs()
}

/// Grow one tree.
///
/// `sorted[f]` lists every row in ascending order of `columns[f]`; only
/// `rows` take part and only `features` (ascending) are searched. A split
/// needs positive gain, gain at least `gamma`, and at least
/// `min_child_weight` hessian on both sides. Ties, up to rounding, keep the
/// first candidate in (feature, threshold) order.
pub fn grow(
    columns: &[Vec<f64>],
    sorted: &[Vec<u32>],
    features: &[usize],
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    p: &TreeParams,
) -> Tree {
    let n = grad.len();
    let mut node_of = vec![NONE; n];
    let mut root = Stats {
        g: 0.0,
        h: 0.0,
        n: 0,
    };
    for &r in rows {
        node_of[r as usize] = 0;
        root.g += grad[r as usize];
        root.h += hess[r as usize];
        root.n += 1;
    }
    let mut stats = vec![root];
    // None = leaf, Some = split
    let mut splits: Vec<Option<(Candidate, usize, usize)>> = vec![None];
    let mut frontier = vec![0usize];
    let mut slot_of: Vec<usize> = vec![NONE];

    for _ in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        for (s, &nd) in frontier.iter().enumerate() {
            slot_of[nd] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for &f in features {
            let mut scan = vec![
                Scan {
                    left: Stats {
                        g: 0.0,
                        h: 0.0,
                        n: 0
                    },
                    last: None,
                };
                frontier.len()
            ];
            let col = &columns[f];
            for &r in &sorted[f] {
                let r = r as usize;
                let nd = node_of[r];
                if nd == NONE || slot_of[nd] == NONE {
                    continue;
                }
                let s = slot_of[nd];
                let v = col[r];
                let sc = &mut scan[s];
                if let Some(lv) = sc.last {
                    if v > lv {
                        let tot = stats[nd];
                        let (gl, hl) = (sc.left.g, sc.left.h);
                        let (gr, hr) = (tot.g - gl, tot.h - hl);
                        if hl >= p.min_child_weight && hr >= p.min_child_weight {
                            let gain = split_gain(gl, hl, gr, hr, p.lambda);
                            if gain > 0.0
                                && gain >= p.gamma
                                && best[s].is_none_or(|b| beats(gain, b.gain))
                            {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: midpoint(lv, v),
                                    left: sc.left,
                                });
                            }
                        }
                    }
                }
                sc.left.g += grad[r];
                sc.left.h += hess[r];
                sc.left.n += 1;
                sc.last = Some(v);
            }
        }

        let mut next = Vec::new();
        for (s, &nd) in frontier.iter().enumerate() {
            slot_of[nd] = NONE;
            if let Some(c) = best[s] {
                let tot = stats[nd];
                let right = Stats {
                    g: tot.g - c.left.g,
                    h: tot.h - c.left.h,
                    n: tot.n - c.left.n,
                };
                let (l, r) = (stats.len(), stats.len() + 1);
                stats.push(c.left);
                stats.push(right);
                splits.push(None);
                splits.push(None);
                slot_of.push(NONE);
                slot_of.push(NONE);
                splits[nd] = Some((c, l, r));
                next.push(l);
                next.push(r);
            }
        }
        for &r in rows {
            let r = r as usize;
            let nd = node_of[r];
            if let Some((c, l, rt)) = splits[nd] {
                node_of[r] = if columns[c.feature][r] < c.threshold {
                    l
                } else {
                    rt
                };
            }
        }
        frontier = next;
    }

    let nodes = stats
        .iter()
        .zip(&splits)
        .map(|(st, sp)| match sp {
            Some((c, l, r)) => Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: *l,
                right: *r,
                gain: c.gain,
                cover: st.n,
                hessian: st.h,
            },
            None => Node::Leaf {
                value: -p.learning_rate * st.g / (st.h + p.lambda),
                cover: st.n,
                hessian: st.h,
            },
        })
        .collect();
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_child_weight: 0.0,
            gamma: 0.0,
            lambda: 1.0,
            learning_rate: 1.0,
        }
    }

    fn sorted(columns: &[Vec<f64>]) -> Vec<Vec<u32>> {
        columns
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect()
    }

    #[test]
    fn single_split_on_step() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let g = [1.0, 1.0, -1.0, -1.0];
        let h = [1.0; 4];
        let t = grow(&x, &sorted(&x), &[0], &[0, 1, 2, 3], &g, &h, &params(1));
        assert_eq!(t.nodes.len(), 3);
        match &t.nodes[0] {
            Node::Split {
                threshold,
                gain,
                cover,
                ..
            } => {
                assert_eq!(*threshold, 2.5);
                // 2²/3 + 2²/3 - 0
                assert!((gain - 8.0 / 3.0).abs() < 1e-12);
                assert_eq!(*cover, 4);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(|_| 0.0), -2.0 / 3.0);
        assert_eq!(t.predict(|_| 9.0), 2.0 / 3.0);
    }

    #[test]
    fn gamma_and_min_child_weight_prune() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let g = [1.0, 1.0, -1.0, -1.0];
        let h = [1.0; 4];
        let mut p = params(3);
        p.gamma = 3.0;
        assert_eq!(
            grow(&x, &sorted(&x), &[0], &[0, 1, 2, 3], &g, &h, &p)
                .nodes
                .len(),
            1
        );
        let mut p = params(3);
        p.min_child_weight = 2.5;
        assert_eq!(
            grow(&x, &sorted(&x), &[0], &[0, 1, 2, 3], &g, &h, &p)
                .nodes
                .len(),
            1
        );
    }

    #[test]
    fn constant_feature_never_splits() {
        let x = vec![vec![5.0; 6]];
        let g = [1.0, -1.0, 1.0, -1.0, 2.0, -2.0];
        let t = grow(
            &x,
            &sorted(&x),
            &[0],
            &[0, 1, 2, 3, 4, 5],
            &g,
            &[1.0; 6],
            &params(4),
        );
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn unsampled_rows_are_ignored() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let g = [1.0, 100.0, -1.0, -1.0];
        let t = grow(&x, &sorted(&x), &[0], &[0, 2, 3], &g, &[1.0; 4], &params(1));
        assert_eq!(t.nodes[0].cover(), 3);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn midpoint_between_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(m > lo && m <= hi);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }

    #[test]
    fn depth_limit() {
        let x = vec![(0..16).map(f64::from).collect::<Vec<_>>()];
        let g: Vec<f64> = (0..16)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let rows: Vec<u32> = (0..16).collect();
        let t = grow(&x, &sorted(&x), &[0], &rows, &g, &[1.0; 16], &params(2));
        assert!(t.depth() <= 2);
    }
}

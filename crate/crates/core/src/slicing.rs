//! Dynamic time slicing.
//!
//! Interval lengths are chosen greedily so that the set of events in each
//! new interval is as similar as possible (Jaccard index) to the set of
//! events in the interval before it. An event here is an undirected address
//! pair active on a day, see [`day_event_sets`].

use std::hash::Hash;

use rustc_hash::FxHashSet;
use serde::Serialize;
use thiserror::Error;

use crate::graph::DayRange;
use crate::ingest::{AddressId, TransactionRecord};
use crate::stats::{self, StatsError};

pub const DEFAULT_MIN_DAYS: usize = 7;
pub const DEFAULT_MAX_DAYS: usize = 28;

#[derive(Debug, Error, PartialEq)]
pub enum SliceError {
    #[error("invalid interval bounds: min {min}, max {max}")]
    Bounds { min: usize, max: usize },
    #[error("need at least {needed} days of events, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("price series covers {got} days, plan needs {needed}")]
    PriceTooShort { needed: usize, got: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Jaccard index `|a ∩ b| / |a ∪ b|`; two empty sets are identical (1.0).
pub fn jaccard<T: Eq + Hash, S: std::hash::BuildHasher>(
    a: &std::collections::HashSet<T, S>,
    b: &std::collections::HashSet<T, S>,
) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(*x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Result of [`slice_events`]. Interval `i` covers day indices
/// `boundaries[i]..boundaries[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPlan {
    pub boundaries: Vec<usize>,
    /// Similarity between interval `i` and interval `i + 1`.
    pub similarity_scores: Vec<f64>,
    /// Trailing days too few to form a full interval; carries no score.
    pub partial_tail: Option<(usize, usize)>,
}

impl IntervalPlan {
    pub fn n_intervals(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.intervals().map(|(a, b)| b - a).collect()
    }
}

/// Greedy forward slicing of day-indexed event sets.
///
/// The first interval spans `min_days`. Each following interval takes the
/// length in `[min_days, max_days]` (capped by the remaining days) whose
/// event set has the highest Jaccard similarity with the previous interval;
/// ties go to the shorter length. Fewer than `min_days` leftover days form
/// the partial tail.
pub fn slice_events<E: Eq + Hash + Clone>(
    events: &[FxHashSet<E>],
    min_days: usize,
    max_days: usize,
) -> Result<IntervalPlan, SliceError> {
    if min_days == 0 || min_days > max_days {
        return Err(SliceError::Bounds {
            min: min_days,
            max: max_days,
        });
    }
    let n = events.len();
    if n < 2 * min_days {
        return Err(SliceError::TooFewDays {
            needed: 2 * min_days,
            got: n,
        });
    }
    let union_of = |from: usize, to: usize| -> FxHashSet<E> {
        let mut s = FxHashSet::default();
        for day in &events[from..to] {
            s.extend(day.iter().cloned());
        }
        s
    };

    let mut boundaries = vec![0, min_days];
    let mut scores = Vec::new();
    let mut partial_tail = None;
    let mut current = union_of(0, min_days);
    loop {
        let start = *boundaries.last().expect("non-empty");
        let remaining = n - start;
        if remaining == 0 {
            break;
        }
        if remaining < min_days {
            partial_tail = Some((start, n));
            break;
        }
        let longest = max_days.min(remaining);
        let mut next: FxHashSet<E> = FxHashSet::default();
        let mut inter = 0usize;
        // best as the exact fraction (intersection, union)
        let mut best: Option<(usize, usize, usize)> = None;
        for len in 1..=longest {
            for e in &events[start + len - 1] {
                if !next.contains(e) {
                    if current.contains(e) {
                        inter += 1;
                    }
                    next.insert(e.clone());
                }
            }
            if len < min_days {
                continue;
            }
            let union = current.len() + next.len() - inter;
            let (num, den) = if union == 0 { (1, 1) } else { (inter, union) };
            let better = match best {
                None => true,
                Some((_, bn, bd)) => num * bd > bn * den,
            };
            if better {
                best = Some((len, num, den));
            }
        }
        let (len, num, den) = best.expect("at least one candidate length");
        scores.push(num as f64 / den as f64);
        boundaries.push(start + len);
        current = union_of(start, start + len);
    }
    Ok(IntervalPlan {
        boundaries,
        similarity_scores: scores,
        partial_tail,
    })
}

/// Undirected address pairs active on each day of `range` (day index 0 = `range.start`).
pub fn day_event_sets(
    txs: &[TransactionRecord],
    range: DayRange,
) -> Vec<FxHashSet<(AddressId, AddressId)>> {
    let mut out = vec![FxHashSet::default(); range.len()];
    for tx in txs {
        let day = tx.day();
        if range.contains(day) {
            let pair = if tx.source <= tx.target {
                (tx.source, tx.target)
            } else {
                (tx.target, tx.source)
            };
            out[(day - range.start) as usize].insert(pair);
        }
    }
    out
}

/// For every scored pair of adjacent intervals, the similarity and the mean
/// close over the later interval. `closes[i]` is the close on day index `i`.
pub fn similarity_vs_price(
    plan: &IntervalPlan,
    closes: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SliceError> {
    let last = *plan.boundaries.last().unwrap_or(&0);
    if closes.len() < last {
        return Err(SliceError::PriceTooShort {
            needed: last,
            got: closes.len(),
        });
    }
    let prices = plan
        .intervals()
        .skip(1)
        .map(|(a, b)| stats::mean(&closes[a..b]))
        .collect();
    Ok((plan.similarity_scores.clone(), prices))
}

/// Pearson correlation (and p-value) between interval similarity and price.
pub fn similarity_price_correlation(
    plan: &IntervalPlan,
    closes: &[f64],
) -> Result<(f64, f64), SliceError> {
    let (sim, price) = similarity_vs_price(plan, closes)?;
    Ok(stats::pearson(&sim, &price)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&'static str]) -> FxHashSet<&'static str> {
        items.iter().copied().collect()
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        // |{bc}| / |{ab, bc, cd}|
        assert!((jaccard(&set(&["ab", "bc"]), &set(&["bc", "cd"])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn stationary_stream_slices_at_min_days() {
        let day: FxHashSet<u32> = (0..20).collect();
        let events = vec![day; 50];
        let plan = slice_events(&events, 7, 28).unwrap();
        assert_eq!(plan.boundaries, vec![0, 7, 14, 21, 28, 35, 42, 49]);
        assert!(plan.similarity_scores.iter().all(|&s| s == 1.0));
        assert_eq!(plan.similarity_scores.len(), plan.n_intervals() - 1);
        assert_eq!(plan.partial_tail, Some((49, 50)));
    }

    #[test]
    fn bounds_and_length_errors() {
        let events = vec![FxHashSet::<u32>::default(); 10];
        assert!(matches!(
            slice_events(&events, 0, 3),
            Err(SliceError::Bounds { .. })
        ));
        assert!(matches!(
            slice_events(&events, 5, 3),
            Err(SliceError::Bounds { .. })
        ));
        assert!(matches!(
            slice_events(&events, 6, 8),
            Err(SliceError::TooFewDays {
                needed: 12,
                got: 10
            })
        ));
    }

    #[test]
    fn remaining_days_cap_candidate_lengths() {
        let day: FxHashSet<u32> = (0..5).collect();
        let plan = slice_events(&vec![day; 16], 7, 28).unwrap();
        assert_eq!(plan.boundaries, vec![0, 7, 14]);
        assert_eq!(plan.partial_tail, Some((14, 16)));
    }
}

//! Rank-based fitness shaping.

use std::cmp::Ordering;

/// Rank-based utility per sample, in the original sample order. Larger is
/// better; the weights sum to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityWeights(Vec<f64>);

impl UtilityWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sample indices ordered from best (lowest fitness) to worst. NaN sorts as
/// +inf and ties keep index order.
pub fn ranking(fitness: &[f64]) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| key(fitness[a]).partial_cmp(&key(fitness[b])).unwrap_or(Ordering::Equal));
    order
}

/// `u = max(0, ln(n/2 + 1) − ln(rank))`, normalized to sum to one, then shifted
/// by `−1/n`. Rank 1 is the lowest fitness.
pub fn make_utilities(fitness: &[f64]) -> UtilityWeights {
    let n = fitness.len();
    if n == 0 {
        return UtilityWeights(Vec::new());
    }
    let head = (n as f64 / 2.0 + 1.0).ln();
    let by_rank: Vec<f64> = (1..=n).map(|rank| (head - (rank as f64).ln()).max(0.0)).collect();
    let total: f64 = by_rank.iter().sum();
    let mut u = vec![0.0; n];
    for (rank, &idx) in ranking(fitness).iter().enumerate() {
        u[idx] = by_rank[rank] / total - 1.0 / n as f64;
    }
    UtilityWeights(u)
}

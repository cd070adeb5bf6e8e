//! Binary-relevance ranking metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub ndcg: f64,
    pub precision: f64,
    pub rr: f64,
}

/// NDCG@k with log₂ discount, P@k and reciprocal rank of the first relevant
/// item over the whole ranking. Empty `relevant` gives all zeros.
///
/// # Panics
/// If `k` is zero.
pub fn metrics(ranked: &[u64], relevant: &BTreeSet<u64>, k: usize) -> RankMetrics {
    assert!(k >= 1, "k must be at least 1");
    if relevant.is_empty() {
        return RankMetrics { ndcg: 0.0, precision: 0.0, rr: 0.0 };
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let mut dcg = 0.0;
    let mut hits = 0usize;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if relevant.contains(id) {
            dcg += discount(i);
            hits += 1;
        }
    }
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    let rr = ranked
        .iter()
        .position(|id| relevant.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64);
    RankMetrics {
        ndcg: dcg / idcg,
        precision: hits as f64 / k as f64,
        rr,
    }
}

//! Temporal queries with ground-truth relevance recomputed at query time.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{embed_distance, ConceptKey, DistanceMetric, Edge, EdgeStore};
use crate::signals::Thresholds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalQuery {
    pub subject: String,
    pub predicate: String,
    pub t_q: f64,
    /// Edges of the concept that are current at `t_q`.
    pub relevant: BTreeSet<u64>,
}

/// Edges of the history (sorted by time) current at `t_q`: the live edge of
/// the last span and its reinforcements, considering only edges up to `t_q`.
pub fn current_at(history: &[&Edge], t_q: f64, eps: f64, metric: DistanceMetric) -> Result<BTreeSet<u64>> {
    let seen: Vec<&Edge> = history.iter().copied().filter(|e| e.t.0 <= t_q).collect();
    let mut start = 0;
    for j in 1..seen.len() {
        if embed_distance(&seen[start].value, &seen[j].value, metric)? > eps {
            start = j;
        }
    }
    Ok(seen[start.min(seen.len())..].iter().map(|e| e.id).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub seed: u64,
    pub queries: Vec<TemporalQuery>,
    /// More queries were requested than there are concepts, so concepts repeat.
    pub with_replacement: bool,
}

/// Samples `n` queries: `t_q` uniform over the second half of the window and a
/// concept uniform among those observed by `t_q`.
pub fn generate_queries(
    store: &EdgeStore,
    thresholds: &Thresholds,
    metric: DistanceMetric,
    n: usize,
    seed: u64,
) -> Result<QuerySet> {
    if n == 0 {
        return Err(Error::Config("at least one query is required".into()));
    }
    let (start, end) = store
        .window()
        .ok_or_else(|| Error::InsufficientData("store has no observation window".into()))?;
    let concepts: Vec<(&ConceptKey, f64)> = store
        .concepts()
        .map(|(k, ix)| (k, store.edge(ix[0]).t.0))
        .collect();
    let mid = start + 0.5 * (end - start);
    if !concepts.iter().any(|&(_, first)| first <= end) {
        return Err(Error::InsufficientData("no concept is observed inside the window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n);
    while queries.len() < n {
        let t_q = if end > mid { rng.random_range(mid..=end) } else { end };
        let eligible: Vec<&ConceptKey> = concepts.iter().filter(|&&(_, first)| first <= t_q).map(|&(k, _)| k).collect();
        if eligible.is_empty() {
            continue;
        }
        let (s, p) = eligible[rng.random_range(0..eligible.len())];
        let history = store.concept_history(s, p);
        let relevant = current_at(&history, t_q, thresholds.for_predicate(p), metric)?;
        queries.push(TemporalQuery {
            subject: s.clone(),
            predicate: p.clone(),
            t_q,
            relevant,
        });
    }
    Ok(QuerySet {
        seed,
        queries,
        with_replacement: n > concepts.len(),
    })
}

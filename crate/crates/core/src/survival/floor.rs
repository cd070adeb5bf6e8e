//! Shelf-life floor from median inter-observation gaps.

use std::collections::BTreeMap;

use crate::kg::EdgeStore;

/// Median of a non-empty sample; `None` when empty.
pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Positive consecutive observation gaps pooled per `(cluster, context)`.
/// Each gap is attributed to the context of the later observation.
/// Same-timestamp pairs are skipped.
pub fn gap_pools<F>(store: &EdgeStore, cluster_of: F) -> BTreeMap<(i64, Option<String>), Vec<f64>>
where
    F: Fn(&str) -> Option<i64>,
{
    let mut pools: BTreeMap<(i64, Option<String>), Vec<f64>> = BTreeMap::new();
    for ((_, predicate), ix) in store.concepts() {
        let Some(k) = cluster_of(predicate) else {
            continue;
        };
        for pair in ix.windows(2) {
            let (a, b) = (store.edge(pair[0]), store.edge(pair[1]));
            let gap = b.t.0 - a.t.0;
            if gap > 0.0 {
                pools.entry((k, b.context.clone())).or_default().push(gap);
            }
        }
    }
    pools
}

/// Floor for one `(cluster, context)` group; `min_duration` when the group
/// has no gaps.
pub fn tau_floor<F>(store: &EdgeStore, cluster_of: F, cluster: i64, context: Option<&str>, min_duration: f64) -> f64
where
    F: Fn(&str) -> Option<i64>,
{
    let mut pools = gap_pools(store, cluster_of);
    pools
        .get_mut(&(cluster, context.map(str::to_string)))
        .and_then(|g| median(g))
        .unwrap_or(min_duration)
}

/// `τ_eff = max(τ, floor)`.
pub fn apply_floor(tau: f64, floor: f64) -> f64 {
    tau.max(floor)
}

//! Partition agreement and cluster-quality metrics.

use std::collections::BTreeMap;

type Counts = BTreeMap<i64, f64>;

fn contingency(a: &[i64], b: &[i64]) -> (BTreeMap<(i64, i64), f64>, Counts, Counts) {
    let mut joint = BTreeMap::new();
    let mut ra = BTreeMap::new();
    let mut rb = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    (joint, ra, rb)
}

fn comb2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index and normalized mutual information (arithmetic-mean
/// normalization). Noise labels are treated as an ordinary label.
///
/// # Panics
/// If the label vectors differ in length.
pub fn ari_nmi(a: &[i64], b: &[i64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "label vectors must have equal length");
    let n = a.len() as f64;
    if a.is_empty() {
        return (1.0, 1.0);
    }
    let (joint, ra, rb) = contingency(a, b);

    let sum_ij: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = ra.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = rb.values().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(n).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (sum_a + sum_b);
    let ari = if (max_index - expected).abs() < 1e-12 {
        // Both partitions trivial (all-one-cluster or all-singletons).
        if ra.len() == rb.len() { 1.0 } else { 0.0 }
    } else {
        (sum_ij - expected) / (max_index - expected)
    };

    let entropy = |m: &BTreeMap<i64, f64>| -> f64 { -m.values().map(|&c| (c / n) * (c / n).ln()).sum::<f64>() };
    let (ha, hb) = (entropy(&ra), entropy(&rb));
    let nmi = if ha == 0.0 && hb == 0.0 {
        1.0
    } else {
        let mi: f64 = joint
            .iter()
            .map(|(&(x, y), &c)| (c / n) * ((c * n) / (ra[&x] * rb[&y])).ln())
            .sum();
        let denom = 0.5 * (ha + hb);
        if denom <= 0.0 { 0.0 } else { (mi / denom).clamp(0.0, 1.0) }
    };
    (ari, nmi)
}

/// Mean silhouette over non-noise points. `None` with fewer than two clusters.
pub fn silhouette(points: &[Vec<f64>], labels: &[i64]) -> Option<f64> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let ids: Vec<usize> = (0..points.len()).filter(|&i| labels[i] >= 0).collect();
    let mut clusters: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for &i in &ids {
        clusters.entry(labels[i]).or_default().push(i);
    }
    if clusters.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for &i in &ids {
        let own = &clusters[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| dist(&points[i], &points[j])).sum::<f64>()
            / (own.len() - 1) as f64;
        let b = clusters
            .iter()
            .filter(|(&k, _)| k != labels[i])
            .map(|(_, m)| m.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    Some(total / ids.len() as f64)
}

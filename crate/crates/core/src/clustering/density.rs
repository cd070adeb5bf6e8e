//! Hierarchical density-based clustering: mutual-reachability minimum
//! spanning tree, condensed single-linkage tree and excess-of-mass selection.

use rayon::prelude::*;

/// Smallest distance used when converting distances to densities `λ = 1/d`.
const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityResult {
    /// Cluster label per point; `-1` is noise.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    /// Stability of each selected cluster, indexed by label.
    pub stabilities: Vec<f64>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Core distance: distance to the `min_samples`-th nearest point, counting
/// the point itself as the first.
pub fn core_distances(dist: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    dist.iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(f64::total_cmp);
            r[(min_samples.max(1) - 1).min(r.len() - 1)]
        })
        .collect()
}

/// Minimum spanning tree of the mutual-reachability graph by Prim's
/// algorithm. Edges are `(a, b, weight)`.
pub fn mutual_reachability_mst(dist: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = dist.len();
    let mr = |i: usize, j: usize| dist[i][j].max(core[i]).max(core[j]);
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] {
                let d = mr(current, j);
                if d < best[j] {
                    best[j] = d;
                    from[j] = current;
                }
            }
        }
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best[j] < next_d {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_d));
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Dendrogram node: leaves are `0..n`, merges are `n..2n-1`.
#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mut mst: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    mst.sort_by(|a, b| a.2.total_cmp(&b.2));
    // Set representatives are always dendrogram node ids.
    let mut uf = UnionFind::new(2 * n);
    let mut sizes = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (a, b, d) in mst {
        let (ra, rb) = (uf.find(a), uf.find(b));
        let id = n + merges.len();
        let size = sizes[ra] + sizes[rb];
        sizes[id] = size;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: d,
            size,
        });
        uf.parent[ra] = id;
        uf.parent[rb] = id;
    }
    merges
}

#[derive(Debug, Clone)]
struct Condensed {
    parent: Option<usize>,
    birth: f64,
    children: Vec<usize>,
    stability: f64,
    /// Points that left this cluster as noise.
    fallen: Vec<usize>,
}

fn leaves(node: usize, n: usize, merges: &[Merge], out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = merges[x - n];
            stack.push(m.left);
            stack.push(m.right);
        }
    }
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<Condensed> {
    let size = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let mut clusters = vec![Condensed {
        parent: None,
        birth: 0.0,
        children: Vec::new(),
        stability: 0.0,
        fallen: Vec::new(),
    }];
    let mut stack = vec![(2 * n - 2, 0usize)];
    while let Some((node, c)) = stack.pop() {
        if node < n {
            // A lone point still attached to a cluster leaves at infinite
            // density; only reachable when min_cluster_size is 1.
            clusters[c].fallen.push(node);
            continue;
        }
        let m = merges[node - n];
        let lambda = 1.0 / m.distance.max(MIN_DISTANCE);
        let (sl, sr) = (size(m.left), size(m.right));
        let birth = clusters[c].birth;
        if sl >= min_cluster_size && sr >= min_cluster_size {
            clusters[c].stability += (lambda - birth) * (sl + sr) as f64;
            for child in [m.left, m.right] {
                let id = clusters.len();
                clusters.push(Condensed {
                    parent: Some(c),
                    birth: lambda,
                    children: Vec::new(),
                    stability: 0.0,
                    fallen: Vec::new(),
                });
                clusters[c].children.push(id);
                stack.push((child, id));
            }
        } else {
            for (child, s) in [(m.left, sl), (m.right, sr)] {
                if s >= min_cluster_size {
                    stack.push((child, c));
                } else {
                    let mut pts = Vec::new();
                    leaves(child, n, merges, &mut pts);
                    clusters[c].stability += (lambda - birth) * pts.len() as f64;
                    clusters[c].fallen.extend(pts);
                }
            }
        }
    }
    clusters
}

/// Clusters points with the given hyperparameters. When the condensed tree
/// never splits, all points form a single cluster.
pub fn hdbscan(points: &[Vec<f64>], min_cluster_size: usize, min_samples: usize) -> DensityResult {
    let n = points.len();
    if n == 0 {
        return DensityResult {
            labels: Vec::new(),
            n_clusters: 0,
            stabilities: Vec::new(),
        };
    }
    if n == 1 || n < min_cluster_size {
        return DensityResult {
            labels: vec![-1; n],
            n_clusters: 0,
            stabilities: Vec::new(),
        };
    }
    let dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| euclid(&points[i], &points[j])).collect())
        .collect();
    let core = core_distances(&dist, min_samples);
    let mst = mutual_reachability_mst(&dist, &core);
    let merges = single_linkage(n, mst);
    let tree = condense(n, &merges, min_cluster_size.max(2));

    // Excess-of-mass selection, children are always created after parents.
    let mut selected = vec![false; tree.len()];
    let mut subtree = vec![0.0; tree.len()];
    for c in (0..tree.len()).rev() {
        if tree[c].children.is_empty() {
            selected[c] = true;
            subtree[c] = tree[c].stability;
            continue;
        }
        let child_sum: f64 = tree[c].children.iter().map(|&k| subtree[k]).sum();
        if c != 0 && tree[c].stability >= child_sum {
            selected[c] = true;
            subtree[c] = tree[c].stability;
            let mut stack = tree[c].children.clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(tree[k].children.iter().copied());
            }
        } else {
            subtree[c] = child_sum;
        }
    }

    // Each point belongs to the selected ancestor of the cluster it fell from.
    let mut owner = vec![usize::MAX; n];
    for (c, cl) in tree.iter().enumerate() {
        for &p in &cl.fallen {
            owner[p] = c;
        }
    }
    let selected_ancestor = |mut c: usize| -> Option<usize> {
        loop {
            if selected[c] {
                return Some(c);
            }
            c = tree[c].parent?;
        }
    };
    let raw: Vec<Option<usize>> = owner.iter().map(|&c| selected_ancestor(c)).collect();

    // Number clusters by their lowest member index.
    let mut order: Vec<usize> = Vec::new();
    for c in raw.iter().flatten() {
        if !order.contains(c) {
            order.push(*c);
        }
    }
    let labels = raw
        .iter()
        .map(|c| match c {
            Some(c) => order.iter().position(|x| x == c).unwrap() as i64,
            None => -1,
        })
        .collect();
    DensityResult {
        labels,
        n_clusters: order.len(),
        stabilities: order.iter().map(|&c| tree[c].stability).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
                truth.push(k as i64);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separated_blobs() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]], 5, 0.3, 4);
        let r = hdbscan(&pts, 3, 2);
        assert_eq!(r.n_clusters, 4);
        let (ari, _) = crate::clustering::metrics::ari_nmi(&r.labels, &truth);
        assert_eq!(ari, 1.0);
    }

    #[test]
    fn duplicates_form_one_cluster() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 20];
        let r = hdbscan(&pts, 3, 2);
        assert_eq!(r.n_clusters, 1);
        assert!(r.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn outlier_is_noise() {
        let (mut pts, _) = blobs(&[[0.0, 0.0], [10.0, 0.0]], 6, 0.3, 9);
        pts.push(vec![100.0, 100.0]);
        let r = hdbscan(&pts, 3, 2);
        assert_eq!(r.n_clusters, 2);
        assert_eq!(*r.labels.last().unwrap(), -1);
    }

    #[test]
    fn core_distance_counts_self() {
        let dist = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]];
        assert_eq!(core_distances(&dist, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&dist, 2), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn mst_has_minimum_weight() {
        // Brute force over all spanning trees of 4 nodes via edge subsets.
        let pts = [[0.0, 0.0], [1.0, 0.2], [3.0, 0.1], [3.2, 2.0]];
        let dist: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| euclid(a, b)).collect()).collect();
        let core = core_distances(&dist, 2);
        let mst = mutual_reachability_mst(&dist, &core);
        let total: f64 = mst.iter().map(|e| e.2).sum();
        let mr = |i: usize, j: usize| dist[i][j].max(core[i]).max(core[j]);
        let all: Vec<(usize, usize)> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << all.len()) {
            if mask.count_ones() != 3 {
                continue;
            }
            let mut uf = UnionFind::new(4);
            let mut w = 0.0;
            let mut ok = true;
            for (k, &(i, j)) in all.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    let (a, b) = (uf.find(i), uf.find(j));
                    if a == b {
                        ok = false;
                    }
                    uf.parent[a] = b;
                    w += mr(i, j);
                }
            }
            if ok {
                best = best.min(w);
            }
        }
        assert!((total - best).abs() < 1e-12);
    }
}

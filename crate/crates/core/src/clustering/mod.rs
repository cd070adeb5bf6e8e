//! Unsupervised discovery of domain clusters over predicate profiles.

pub mod density;
pub mod dpmixture;
pub mod metrics;
pub mod profiles;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use metrics::{ari_nmi, silhouette};
pub use profiles::{build_profiles, raw_features, FeatureScaler, PredicateProfile, FEATURE_NAMES, N_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Density,
    Dpmixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: ClusterMethod,
    /// Predicate to cluster id; `-1` marks density noise.
    pub labels: BTreeMap<String, i64>,
    /// Per-cluster mean of standardized features.
    pub centroids: BTreeMap<i64, Vec<f64>>,
    /// Per-cluster mean of predicate embeddings, where supplied.
    #[serde(default)]
    pub embedding_centroids: BTreeMap<i64, Vec<f64>>,
    pub scaler: FeatureScaler,
    pub converged: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ClusterModel {
    fn from_labels(
        method: ClusterMethod,
        profiles: &[PredicateProfile],
        scaler: &FeatureScaler,
        labels: &[i64],
        converged: bool,
    ) -> Self {
        let mut sums: BTreeMap<i64, (Vec<f64>, usize)> = BTreeMap::new();
        let mut emb: BTreeMap<i64, (Vec<f64>, usize)> = BTreeMap::new();
        for (p, &l) in profiles.iter().zip(labels) {
            if l < 0 {
                continue;
            }
            let e = sums.entry(l).or_insert((vec![0.0; N_FEATURES], 0));
            for (acc, x) in e.0.iter_mut().zip(&p.features) {
                *acc += x;
            }
            e.1 += 1;
            if let Some(v) = &p.embedding {
                let e = emb.entry(l).or_insert((vec![0.0; v.len()], 0));
                if e.0.len() == v.len() {
                    for (acc, x) in e.0.iter_mut().zip(v) {
                        *acc += x;
                    }
                    e.1 += 1;
                }
            }
        }
        let mean = |m: BTreeMap<i64, (Vec<f64>, usize)>| -> BTreeMap<i64, Vec<f64>> {
            m.into_iter()
                .filter(|(_, (_, n))| *n > 0)
                .map(|(k, (s, n))| (k, s.into_iter().map(|x| x / n as f64).collect()))
                .collect()
        };
        let mut warnings = Vec::new();
        if labels.iter().all(|&l| l < 0) {
            warnings.push("every predicate was labelled noise".to_string());
        }
        ClusterModel {
            method,
            labels: profiles.iter().zip(labels).map(|(p, &l)| (p.predicate.clone(), l)).collect(),
            centroids: mean(sums),
            embedding_centroids: mean(emb),
            scaler: scaler.clone(),
            converged,
            warnings,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Cluster of a predicate seen during fitting; noise yields `None`.
    pub fn label(&self, predicate: &str) -> Option<i64> {
        self.labels.get(predicate).copied().filter(|&l| l >= 0)
    }

    /// Labels in the order of `predicates`; unknown predicates map to `-1`.
    pub fn label_vector(&self, predicates: &[String]) -> Vec<i64> {
        predicates.iter().map(|p| self.labels.get(p).copied().unwrap_or(-1)).collect()
    }
}

fn feature_matrix(profiles: &[PredicateProfile]) -> Vec<Vec<f64>> {
    profiles.iter().map(|p| p.features.to_vec()).collect()
}

/// Density-based clustering in standardized feature space.
pub fn cluster_density(
    profiles: &[PredicateProfile],
    scaler: &FeatureScaler,
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<ClusterModel> {
    if min_cluster_size < 2 || min_samples < 1 {
        return Err(Error::Config("min_cluster_size must be ≥ 2 and min_samples ≥ 1".into()));
    }
    if profiles.len() < min_cluster_size {
        return Err(Error::InsufficientData(format!(
            "{} profiles, min_cluster_size is {min_cluster_size}",
            profiles.len()
        )));
    }
    let r = density::hdbscan(&feature_matrix(profiles), min_cluster_size, min_samples);
    Ok(ClusterModel::from_labels(ClusterMethod::Density, profiles, scaler, &r.labels, true))
}

/// Dirichlet-process mixture clustering in standardized feature space.
pub fn cluster_dpmixture(
    profiles: &[PredicateProfile],
    scaler: &FeatureScaler,
    opts: &dpmixture::DpOptions,
) -> Result<ClusterModel> {
    if profiles.len() < 2 {
        return Err(Error::InsufficientData("mixture clustering needs at least 2 profiles".into()));
    }
    if opts.max_components == 0 || opts.weight_concentration.is_nan() || opts.weight_concentration <= 0.0 {
        return Err(Error::Config("max_components and weight_concentration must be positive".into()));
    }
    let r = dpmixture::fit_dp_mixture(&feature_matrix(profiles), opts);
    let labels: Vec<i64> = r.labels.iter().map(|&l| l as i64).collect();
    let mut model = ClusterModel::from_labels(ClusterMethod::Dpmixture, profiles, scaler, &labels, r.converged);
    if !r.converged {
        model
            .warnings
            .push(format!("variational EM did not converge in {} iterations", r.iterations));
    }
    Ok(model)
}

/// Input for assigning a predicate not seen at fit time.
#[derive(Debug, Clone, PartialEq)]
pub enum ColdStart<'a> {
    /// Raw (unstandardized) feature vector.
    Profile(&'a [f64; N_FEATURES]),
    Embedding(&'a [f64]),
}

fn nearest(centroids: &BTreeMap<i64, Vec<f64>>, x: &[f64]) -> Option<i64> {
    let mut best: Option<(i64, f64)> = None;
    for (&k, c) in centroids {
        if c.len() != x.len() {
            continue;
        }
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

/// Nearest centroid; ties go to the lower cluster id.
pub fn assign_cold_start(model: &ClusterModel, input: ColdStart<'_>) -> Result<i64> {
    if model.centroids.is_empty() {
        return Err(Error::NoClusters);
    }
    match input {
        ColdStart::Profile(raw) => {
            let z = model.scaler.transform(raw);
            nearest(&model.centroids, &z).ok_or(Error::NoClusters)
        }
        ColdStart::Embedding(e) => nearest(&model.embedding_centroids, e).ok_or_else(|| {
            Error::InsufficientData("model has no embedding centroids of matching dimension".into())
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: i64,
    pub size: usize,
    pub centroid: Vec<f64>,
    pub members: Vec<String>,
    /// Free-text description left for the analyst.
    pub interpretation: String,
}

pub fn summarize(model: &ClusterModel) -> Vec<ClusterSummary> {
    model
        .centroids
        .iter()
        .map(|(&k, c)| {
            let members: Vec<String> =
                model.labels.iter().filter(|(_, &l)| l == k).map(|(p, _)| p.clone()).collect();
            ClusterSummary {
                cluster_id: k,
                size: members.len(),
                centroid: c.clone(),
                members,
                interpretation: String::new(),
            }
        })
        .collect()
}

/// Writes `predicate,cluster_id,<feature columns>` rows.
pub fn write_cluster_csv<W: std::io::Write>(model: &ClusterModel, profiles: &[PredicateProfile], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["predicate".to_string(), "cluster_id".to_string()];
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for p in profiles {
        let mut row = vec![p.predicate.clone(), model.labels.get(&p.predicate).copied().unwrap_or(-1).to_string()];
        row.extend(p.raw.iter().map(|x| x.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str, f: [f64; N_FEATURES]) -> PredicateProfile {
        PredicateProfile {
            predicate: name.into(),
            raw: f,
            features: f,
            embedding: None,
            n_records: 10,
        }
    }

    fn identity_scaler() -> FeatureScaler {
        FeatureScaler {
            mean: [0.0; N_FEATURES],
            sd: [1.0; N_FEATURES],
        }
    }

    fn two_cluster_model() -> ClusterModel {
        let ps = vec![
            profile("a", [1.0, 0.0, 0.0, 0.0, 0.0]),
            profile("b", [-1.0, 0.0, 0.0, 0.0, 0.0]),
        ];
        ClusterModel::from_labels(ClusterMethod::Density, &ps, &identity_scaler(), &[0, 1], true)
    }

    #[test]
    fn cold_start_at_centroid() {
        let m = two_cluster_model();
        assert_eq!(assign_cold_start(&m, ColdStart::Profile(&[1.0, 0.0, 0.0, 0.0, 0.0])).unwrap(), 0);
        assert_eq!(assign_cold_start(&m, ColdStart::Profile(&[-0.9, 0.0, 0.0, 0.0, 0.0])).unwrap(), 1);
    }

    #[test]
    fn cold_start_tie_goes_to_lower_id() {
        let m = two_cluster_model();
        assert_eq!(assign_cold_start(&m, ColdStart::Profile(&[0.0, 3.0, 0.0, 0.0, 0.0])).unwrap(), 0);
    }

    #[test]
    fn cold_start_without_clusters_fails() {
        let ps = vec![profile("a", [0.0; N_FEATURES])];
        let m = ClusterModel::from_labels(ClusterMethod::Density, &ps, &identity_scaler(), &[-1], true);
        assert!(matches!(
            assign_cold_start(&m, ColdStart::Profile(&[0.0; N_FEATURES])),
            Err(Error::NoClusters)
        ));
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn cold_start_by_embedding() {
        let mut ps = vec![
            profile("a", [1.0, 0.0, 0.0, 0.0, 0.0]),
            profile("b", [-1.0, 0.0, 0.0, 0.0, 0.0]),
        ];
        ps[0].embedding = Some(vec![1.0, 0.0]);
        ps[1].embedding = Some(vec![0.0, 1.0]);
        let m = ClusterModel::from_labels(ClusterMethod::Density, &ps, &identity_scaler(), &[0, 1], true);
        assert_eq!(assign_cold_start(&m, ColdStart::Embedding(&[0.1, 0.8])).unwrap(), 1);
    }

    #[test]
    fn affine_rescaling_of_a_feature_is_invisible() {
        use crate::signals::PredicateSignals;
        let mk = |p: &str, v: f64, l: f64| PredicateSignals {
            predicate: p.into(),
            velocity: v,
            volatility: v * 0.1,
            mean_lifetime: Some(l),
            rho: 0.5,
            sup_rate: 0.5,
            n_superseded: 5,
            n_reinforcement: 5,
            n_censored: 5,
            n_concepts: 5,
        };
        let base: Vec<(String, f64, f64)> = (0..12)
            .map(|i| (format!("p{i}"), (i / 4) as f64 * 3.0 + (i % 4) as f64 * 0.1, 10f64.powi(i / 4 + 1)))
            .collect();
        let a: BTreeMap<String, PredicateSignals> = base.iter().map(|(p, v, l)| (p.clone(), mk(p, *v, *l))).collect();
        let b: BTreeMap<String, PredicateSignals> =
            base.iter().map(|(p, v, l)| (p.clone(), mk(p, 5.0 * v + 2.0, *l))).collect();
        let (pa, sa) = build_profiles(&a, 100.0, 1, None).unwrap();
        let (pb, sb) = build_profiles(&b, 100.0, 1, None).unwrap();
        let ma = cluster_density(&pa, &sa, 3, 2).unwrap();
        let mb = cluster_density(&pb, &sb, 3, 2).unwrap();
        assert_eq!(ma.labels, mb.labels);
        assert_eq!(ma.n_clusters(), 3);
    }
}

//! Supersession-threshold sensitivity of the whole pipeline.

use serde::{Deserialize, Serialize};

use crate::clustering::ari_nmi;
use crate::error::{Error, Result};
use crate::kg::EdgeStore;
use crate::pipeline::{self, PipelineConfig};
use crate::signals::EventKind;

/// Maps a predicate list to reference cluster labels.
pub type ReferenceLabels<'a> = dyn Fn(&[String]) -> Vec<i64> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n_superseded: usize,
    pub n_reinforcement: usize,
    pub n_clusters: usize,
    /// Agreement with the supplied reference labels.
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    /// Level-1 `(τ at mean covariates, κ)` per cluster, shortest τ first so
    /// rows are comparable across thresholds.
    pub clusters_by_tau: Vec<(f64, f64)>,
    /// κ change against the first row, rank by rank, where both exist.
    pub kappa_delta: Vec<f64>,
}

/// Runs extract → cluster → fit at each threshold with every other setting
/// from `cfg`. `reference` maps a predicate list to labels for ARI/NMI.
pub fn threshold_sweep(
    store: &EdgeStore,
    cfg: &PipelineConfig,
    epsilons: &[f64],
    reference: Option<&ReferenceLabels<'_>>,
) -> Result<Vec<SweepRow>> {
    if epsilons.len() < 2 {
        return Err(Error::Config("a sweep needs at least two thresholds".into()));
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut c = cfg.clone();
        c.signals.epsilon = eps;
        c.signals.epsilon_per_predicate.clear();
        c.validate()?;
        let run = pipeline::run(store, &c)?;
        let count = |k: EventKind| run.records.iter().filter(|r| r.event == k).count();
        let names = run.clusters.predicates();
        let (ari, nmi) = match reference {
            Some(f) => {
                let (a, n) = ari_nmi(&run.clusters.model.label_vector(&names), &f(&names));
                (Some(a), Some(n))
            }
            None => (None, None),
        };
        let mut clusters_by_tau: Vec<(f64, f64)> = run
            .model
            .clusters
            .iter()
            .filter_map(|(&k, n)| run.model.cluster_tau_at_mean(k).map(|t| (t, n.kappa)))
            .collect();
        clusters_by_tau.sort_by(|a, b| a.0.total_cmp(&b.0));
        let kappa_delta = rows
            .first()
            .map(|first| {
                first.clusters_by_tau.iter().zip(&clusters_by_tau).map(|(a, b)| b.1 - a.1).collect()
            })
            .unwrap_or_else(|| vec![0.0; clusters_by_tau.len()]);
        rows.push(SweepRow {
            epsilon: eps,
            n_superseded: count(EventKind::Superseded),
            n_reinforcement: count(EventKind::Reinforcement),
            n_clusters: run.clusters.model.n_clusters(),
            ari,
            nmi,
            clusters_by_tau,
            kappa_delta,
        });
    }
    Ok(rows)
}

//! Domain → context → entity tree of decay parameters, each level shrunk
//! toward its parent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_cold_start, raw_features, ClusterModel, ColdStart};
use crate::error::{Error, Result};
use crate::kg::EdgeStore;
use crate::signals::{LifetimeRecord, PredicateSignals};
use crate::survival::{
    fit_aft, fit_surface, gap_pools, median, raw_log_tau, AftObs, KappaMode, Standardizer, SurfaceOptions,
    ThetaPenalty,
};

pub type ContextKey = (i64, Option<String>);
pub type EntityKey = (i64, Option<String>, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Cluster,
    Context,
    Entity,
}

impl Level {
    pub fn depth(self) -> usize {
        match self {
            Level::Cluster => 1,
            Level::Context => 2,
            Level::Entity => 3,
        }
    }
}

/// How a node's parameters were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Fitted,
    /// Below the record threshold; parameters copied from the parent.
    Inherited,
    /// No supersession in the cluster: τ is the window length, κ = 1.
    NoEvent,
    /// Too few records or events for a surface; exponential closed form.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeRef {
    Cluster(i64),
    Context(i64, Option<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub level: Level,
    /// Coefficients on the cluster's standardized covariates.
    pub theta: [f64; 4],
    pub theta_raw: [f64; 4],
    pub kappa: f64,
    pub tau_floor: f64,
    pub n_records: usize,
    pub n_events: usize,
    /// Mean velocity and volatility of the node's records.
    pub covariate_mean: (f64, f64),
    pub parent: Option<NodeRef>,
    pub status: NodeStatus,
    pub converged: bool,
}

impl DecayParams {
    /// Surface shelf life in raw covariates, before the floor.
    pub fn surface_tau(&self, v: f64, sigma: f64) -> f64 {
        raw_log_tau(&self.theta_raw, v, sigma).exp()
    }
}

/// `max(τ(v, σ), τ_floor)`.
pub fn effective_tau(params: &DecayParams, v: f64, sigma: f64) -> f64 {
    params.surface_tau(v, sigma).max(params.tau_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    pub lambda_context: f64,
    pub lambda_entity: f64,
    pub min_context_records: usize,
    pub min_entity_records: usize,
    /// Refit κ per context with shrinkage toward the cluster κ.
    pub per_context_kappa: bool,
    pub surface: SurfaceOptions,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            lambda_context: 1.0,
            lambda_entity: 1.0,
            min_context_records: 5,
            min_entity_records: 10,
            per_context_kappa: false,
            surface: SurfaceOptions::default(),
        }
    }
}

impl HierarchyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_context >= 0.0 && self.lambda_entity >= 0.0) {
            return Err(Error::Config("shrinkage weights must be non-negative".into()));
        }
        if self.min_context_records == 0 || self.min_entity_records == 0 {
            return Err(Error::Config("record thresholds must be at least 1".into()));
        }
        Ok(())
    }
}

mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyModel {
    #[serde(with = "pairs")]
    pub clusters: BTreeMap<i64, DecayParams>,
    #[serde(with = "pairs")]
    pub transforms: BTreeMap<i64, Standardizer>,
    #[serde(with = "pairs")]
    pub contexts: BTreeMap<ContextKey, DecayParams>,
    #[serde(with = "pairs")]
    pub entities: BTreeMap<EntityKey, DecayParams>,
    /// Predicate to cluster, including cold-start assignments.
    pub assignment: BTreeMap<String, i64>,
    pub cluster_model: ClusterModel,
    pub options: HierarchyOptions,
    pub window: f64,
    pub warnings: Vec<String>,
}

/// Cluster for every predicate with signals: its label when clustered,
/// otherwise the nearest centroid of its raw profile.
pub fn assign_predicates(
    model: &ClusterModel,
    signals: &BTreeMap<String, PredicateSignals>,
    window: f64,
) -> Result<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    for (p, sig) in signals {
        let k = match model.label(p) {
            Some(k) => k,
            None => assign_cold_start(model, ColdStart::Profile(&raw_features(sig, window)))?,
        };
        out.insert(p.clone(), k);
    }
    Ok(out)
}

fn count_events(obs: &[AftObs]) -> usize {
    obs.iter().filter(|o| o.event).count()
}

fn covariate_mean(obs: &[AftObs]) -> (f64, f64) {
    let n = obs.len().max(1) as f64;
    (obs.iter().map(|o| o.v).sum::<f64>() / n, obs.iter().map(|o| o.sigma).sum::<f64>() / n)
}

type RootFit = (DecayParams, Standardizer, Option<String>);

fn root_node(obs: &[AftObs], window: f64, opts: &SurfaceOptions) -> RootFit {
    let transform = Standardizer::fit(obs);
    let n_events = count_events(obs);
    let node = |theta: [f64; 4], kappa: f64, status: NodeStatus, converged: bool| DecayParams {
        level: Level::Cluster,
        theta,
        theta_raw: transform.to_raw(&theta),
        kappa,
        tau_floor: 0.0,
        n_records: obs.len(),
        n_events,
        covariate_mean: covariate_mean(obs),
        parent: None,
        status,
        converged,
    };
    if n_events == 0 {
        let theta = [window.max(opts.min_duration).ln(), 0.0, 0.0, 0.0];
        return (node(theta, 1.0, NodeStatus::NoEvent, true), transform, None);
    }
    match fit_surface(obs, opts) {
        Ok(fit) => (node(fit.theta, fit.kappa, NodeStatus::Fitted, fit.converged), fit.transform, None),
        Err(e) => {
            let total: f64 = obs.iter().map(|o| o.duration.max(opts.min_duration)).sum();
            let theta = [(total / n_events as f64).ln(), 0.0, 0.0, 0.0];
            (node(theta, 1.0, NodeStatus::Sparse, true), transform, Some(e.to_string()))
        }
    }
}

struct ChildFit<'a> {
    obs: &'a [AftObs],
    transform: &'a Standardizer,
    parent_theta: [f64; 4],
    kappa: KappaMode,
    lambda: f64,
    min_records: usize,
}

fn child_node(c: ChildFit<'_>, level: Level, parent: NodeRef, opts: &SurfaceOptions) -> DecayParams {
    let kappa_parent = match c.kappa {
        KappaMode::Fixed(k) => k,
        KappaMode::Shrunk { target, .. } => target,
        KappaMode::Free => 1.0,
    };
    let mut node = DecayParams {
        level,
        theta: c.parent_theta,
        theta_raw: c.transform.to_raw(&c.parent_theta),
        kappa: kappa_parent,
        tau_floor: 0.0,
        n_records: c.obs.len(),
        n_events: count_events(c.obs),
        covariate_mean: covariate_mean(c.obs),
        parent: Some(parent),
        status: NodeStatus::Inherited,
        converged: true,
    };
    if c.obs.len() < c.min_records {
        return node;
    }
    let fit = fit_aft(
        c.obs,
        c.transform,
        c.parent_theta,
        kappa_parent,
        c.kappa,
        Some(ThetaPenalty { target: c.parent_theta, lambda: c.lambda }),
        false,
        opts,
    );
    node.theta = fit.theta;
    node.theta_raw = c.transform.to_raw(&fit.theta);
    node.kappa = fit.kappa;
    node.status = NodeStatus::Fitted;
    node.converged = fit.converged;
    node
}

/// Fits the three-level tree. Records whose predicate has no entry in
/// `assignment` are ignored.
pub fn fit_hierarchy(
    store: &EdgeStore,
    records: &[LifetimeRecord],
    cluster_model: &ClusterModel,
    assignment: &BTreeMap<String, i64>,
    opts: &HierarchyOptions,
) -> Result<HierarchyModel> {
    opts.validate()?;
    if store.window().is_none() {
        return Err(Error::InsufficientData("store has no observation window".into()));
    }
    let window = store.window_length();
    let sopts = &opts.surface;

    let mut by_cluster: BTreeMap<i64, Vec<AftObs>> = BTreeMap::new();
    let mut by_context: BTreeMap<ContextKey, Vec<AftObs>> = BTreeMap::new();
    let mut by_entity: BTreeMap<EntityKey, Vec<AftObs>> = BTreeMap::new();
    for r in records {
        let Some(&k) = assignment.get(&r.predicate) else {
            continue;
        };
        let o = AftObs::from(r);
        by_cluster.entry(k).or_default().push(o);
        by_context.entry((k, r.context.clone())).or_default().push(o);
        by_entity.entry((k, r.context.clone(), r.entity.clone())).or_default().push(o);
    }
    if by_cluster.is_empty() {
        return Err(Error::InsufficientData("no records belong to an assigned predicate".into()));
    }

    let mut pools = gap_pools(store, |p| assignment.get(p).copied());
    let mut cluster_gaps: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for ((k, _), g) in &pools {
        cluster_gaps.entry(*k).or_default().extend_from_slice(g);
    }
    let mut floor_of = |key: &ContextKey| pools.get_mut(key).and_then(|g| median(g)).unwrap_or(sopts.min_duration);

    let level1: Vec<(i64, RootFit)> =
        by_cluster.par_iter().map(|(&k, obs)| (k, root_node(obs, window, sopts))).collect();
    let mut warnings = Vec::new();
    let mut clusters = BTreeMap::new();
    let mut transforms = BTreeMap::new();
    for (k, (mut node, tr, warn)) in level1 {
        if let Some(w) = warn {
            warnings.push(format!("cluster {k}: {w}; exponential fallback"));
        }
        if node.status == NodeStatus::NoEvent {
            warnings.push(format!("cluster {k}: no supersessions; shelf life set to the window length"));
        }
        node.tau_floor = cluster_gaps.get_mut(&k).and_then(|g| median(g)).unwrap_or(sopts.min_duration);
        clusters.insert(k, node);
        transforms.insert(k, tr);
    }

    let mut contexts: BTreeMap<ContextKey, DecayParams> = by_context
        .par_iter()
        .map(|(key, obs)| {
            let parent = &clusters[&key.0];
            let kappa = if opts.per_context_kappa {
                KappaMode::Shrunk { target: parent.kappa, lambda: opts.lambda_context }
            } else {
                KappaMode::Fixed(parent.kappa)
            };
            let fit = ChildFit {
                obs,
                transform: &transforms[&key.0],
                parent_theta: parent.theta,
                kappa,
                lambda: opts.lambda_context,
                min_records: opts.min_context_records,
            };
            (key.clone(), child_node(fit, Level::Context, NodeRef::Cluster(key.0), sopts))
        })
        .collect();
    for (key, node) in contexts.iter_mut() {
        node.tau_floor = floor_of(key);
    }

    let entities: BTreeMap<EntityKey, DecayParams> = by_entity
        .par_iter()
        .filter(|(_, obs)| obs.len() >= opts.min_entity_records)
        .map(|(key, obs)| {
            let ckey = (key.0, key.1.clone());
            let parent = &contexts[&ckey];
            let fit = ChildFit {
                obs,
                transform: &transforms[&key.0],
                parent_theta: parent.theta,
                kappa: KappaMode::Fixed(parent.kappa),
                lambda: opts.lambda_entity,
                min_records: opts.min_entity_records,
            };
            let mut node = child_node(fit, Level::Entity, NodeRef::Context(key.0, key.1.clone()), sopts);
            node.tau_floor = parent.tau_floor;
            (key.clone(), node)
        })
        .collect();

    for (label, n) in clusters.iter().map(|(k, n)| (format!("cluster {k}"), n)).chain(
        contexts.iter().map(|(k, n)| (format!("context {:?}", k), n)),
    ) {
        if !n.converged {
            warnings.push(format!("{label}: fit did not converge"));
        }
    }

    Ok(HierarchyModel {
        clusters,
        transforms,
        contexts,
        entities,
        assignment: assignment.clone(),
        cluster_model: cluster_model.clone(),
        options: opts.clone(),
        window,
        warnings,
    })
}

/// Outcome of [`resolve_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved<'a> {
    pub cluster: i64,
    pub level: Level,
    pub params: &'a DecayParams,
    /// The predicate was not in the model and was assigned by cold start
    /// (or, lacking any cold-start input, to the cluster with most records).
    pub cold_start: bool,
}

impl HierarchyModel {
    pub fn cluster_of(&self, predicate: &str, cold: Option<ColdStart<'_>>) -> (i64, bool) {
        if let Some(&k) = self.assignment.get(predicate) {
            return (k, false);
        }
        let assigned = cold.and_then(|c| assign_cold_start(&self.cluster_model, c).ok());
        let k = assigned.filter(|k| self.clusters.contains_key(k)).unwrap_or_else(|| {
            self.clusters
                .iter()
                .max_by(|a, b| a.1.n_records.cmp(&b.1.n_records).then(b.0.cmp(a.0)))
                .map(|(&k, _)| k)
                .expect("a fitted hierarchy has at least one cluster")
        });
        (k, true)
    }

    /// Deepest node available for the key, no deeper than `max_level`.
    pub fn resolve_at(
        &self,
        predicate: &str,
        context: Option<&str>,
        entity: Option<&str>,
        max_level: Level,
        cold: Option<ColdStart<'_>>,
    ) -> Resolved<'_> {
        let (k, cold_start) = self.cluster_of(predicate, cold);
        let ctx = context.map(str::to_string);
        if max_level >= Level::Entity {
            if let Some(e) = entity {
                if let Some(p) = self.entities.get(&(k, ctx.clone(), e.to_string())) {
                    return Resolved { cluster: k, level: Level::Entity, params: p, cold_start };
                }
            }
        }
        if max_level >= Level::Context {
            if let Some(p) = self.contexts.get(&(k, ctx)) {
                return Resolved { cluster: k, level: Level::Context, params: p, cold_start };
            }
        }
        Resolved { cluster: k, level: Level::Cluster, params: &self.clusters[&k], cold_start }
    }

    /// Cluster-level surface shelf life at the cluster's mean covariates,
    /// floored.
    pub fn cluster_tau_at_mean(&self, k: i64) -> Option<f64> {
        let (node, tr) = (self.clusters.get(&k)?, self.transforms.get(&k)?);
        Some(effective_tau(node, tr.mean_v, tr.mean_sigma))
    }

    /// Context shelf life at its cluster's mean covariates, floored.
    pub fn context_tau_at_mean(&self, k: i64, context: Option<&str>) -> Option<f64> {
        let node = self.contexts.get(&(k, context.map(str::to_string)))?;
        let tr = self.transforms.get(&k)?;
        Some(effective_tau(node, tr.mean_v, tr.mean_sigma))
    }

    /// Node shelf life at the node's own mean covariates, floored.
    pub fn tau_at_own_mean(node: &DecayParams) -> f64 {
        effective_tau(node, node.covariate_mean.0, node.covariate_mean.1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Deepest available node for a predicate, context and entity.
pub fn resolve_params<'a>(
    model: &'a HierarchyModel,
    predicate: &str,
    context: Option<&str>,
    entity: Option<&str>,
    cold: Option<ColdStart<'_>>,
) -> Resolved<'a> {
    model.resolve_at(predicate, context, entity, Level::Entity, cold)
}

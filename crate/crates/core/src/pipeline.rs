//! End-to-end configuration and the extract → cluster → fit stages.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::clustering::dpmixture::DpOptions;
use crate::clustering::{
    build_profiles, cluster_density, cluster_dpmixture, ClusterMethod, ClusterModel, FeatureScaler, PredicateProfile,
};
use crate::error::{Error, Result};
use crate::hierarchy::{assign_predicates, fit_hierarchy, HierarchyModel, HierarchyOptions};
use crate::kg::{DistanceMetric, EdgeStore};
use crate::retrieval::Method;
use crate::signals::{
    extract_lifetimes, predicate_signals, ExtractOptions, LifetimeRecord, PredicateSignals, Thresholds,
    DEFAULT_EPSILON, DEFAULT_MIN_DURATION,
};
use crate::survival::SurfaceOptions;
use crate::synthgen::GenConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub edges: PathBuf,
    pub truth: PathBuf,
    pub out_dir: PathBuf,
    /// Optional JSON map from predicate to name embedding, for cold start.
    pub predicate_embeddings: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            edges: "data/edges.jsonl".into(),
            truth: "data/truth.json".into(),
            out_dir: "out".into(),
            predicate_embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalsConfig {
    pub epsilon: f64,
    pub epsilon_per_predicate: BTreeMap<String, f64>,
    pub metric: DistanceMetric,
    pub min_duration: f64,
    pub reset_clock: bool,
    /// Observation window override; defaults to the span of the edges.
    pub window: Option<(f64, f64)>,
}

impl Default for SignalsConfig {
    fn default() -> Self {
        SignalsConfig {
            epsilon: DEFAULT_EPSILON,
            epsilon_per_predicate: BTreeMap::new(),
            metric: DistanceMetric::Euclidean,
            min_duration: DEFAULT_MIN_DURATION,
            reset_clock: false,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub method: ClusterMethod,
    pub min_obs: usize,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub max_components: usize,
    pub weight_concentration: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: ClusterMethod::Density,
            min_obs: 5,
            min_cluster_size: 3,
            min_samples: 2,
            max_components: 10,
            weight_concentration: 1.0,
            max_iter: 500,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda_context: f64,
    pub lambda_entity: f64,
    pub min_context_records: usize,
    pub min_entity_records: usize,
    pub per_context_kappa: bool,
    pub kappa_prior: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let h = HierarchyOptions::default();
        FitConfig {
            lambda_context: h.lambda_context,
            lambda_entity: h.lambda_entity,
            min_context_records: h.min_context_records,
            min_entity_records: h.min_entity_records,
            per_context_kappa: false,
            kappa_prior: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_queries: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub sweep_epsilons: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_queries: 200,
            seed: 42,
            methods: Method::ALL.to_vec(),
            sweep_epsilons: vec![0.1, 0.25, 0.3, 0.5, 0.75, 1.0],
        }
    }
}

/// Every tunable of the pipeline. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub signals: SignalsConfig,
    pub clustering: ClusterConfig,
    pub fit: FitConfig,
    pub retrieval: RetrievalConfig,
    pub eval: EvalConfig,
    pub generator: GenConfig,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative and finite, got {x}")))
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds().validate()?;
        positive("signals.min_duration", self.signals.min_duration)?;
        if let Some((a, b)) = self.signals.window {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Config(format!("signals.window must satisfy start < end, got ({a}, {b})")));
            }
        }
        let c = &self.clustering;
        if c.min_obs == 0 || c.min_cluster_size < 2 || c.min_samples == 0 || c.max_components == 0 || c.max_iter == 0 {
            return Err(Error::Config(
                "clustering: min_obs, min_samples, max_components and max_iter must be ≥ 1, min_cluster_size ≥ 2".into(),
            ));
        }
        positive("clustering.weight_concentration", c.weight_concentration)?;
        self.hierarchy_options().validate()?;
        non_negative("retrieval.alpha", self.retrieval.alpha)?;
        non_negative("retrieval.beta", self.retrieval.beta)?;
        if self.eval.n_queries == 0 {
            return Err(Error::Config("eval.n_queries must be ≥ 1".into()));
        }
        for &e in &self.eval.sweep_epsilons {
            positive("eval.sweep_epsilons", e)?;
        }
        self.generator.validate()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            default: self.signals.epsilon,
            per_predicate: self.signals.epsilon_per_predicate.clone(),
        }
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            thresholds: self.thresholds(),
            metric: self.signals.metric,
            min_duration: self.signals.min_duration,
            reset_clock: self.signals.reset_clock,
        }
    }

    pub fn dp_options(&self) -> DpOptions {
        DpOptions {
            max_components: self.clustering.max_components,
            weight_concentration: self.clustering.weight_concentration,
            max_iter: self.clustering.max_iter,
            seed: self.clustering.seed,
            ..DpOptions::default()
        }
    }

    pub fn hierarchy_options(&self) -> HierarchyOptions {
        HierarchyOptions {
            lambda_context: self.fit.lambda_context,
            lambda_entity: self.fit.lambda_entity,
            min_context_records: self.fit.min_context_records,
            min_entity_records: self.fit.min_entity_records,
            per_context_kappa: self.fit.per_context_kappa,
            surface: SurfaceOptions {
                kappa_prior: self.fit.kappa_prior,
                min_duration: self.signals.min_duration,
                ..SurfaceOptions::default()
            },
        }
    }

    /// Applies the configured window override.
    pub fn prepare_store(&self, store: EdgeStore) -> EdgeStore {
        match self.signals.window {
            Some((a, b)) => store.with_window(a, b),
            None => store,
        }
    }
}

/// Output of the clustering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStage {
    pub signals: BTreeMap<String, PredicateSignals>,
    pub skipped: Vec<String>,
    pub profiles: Vec<PredicateProfile>,
    pub scaler: FeatureScaler,
    pub model: ClusterModel,
}

impl ClusterStage {
    pub fn predicates(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.predicate.clone()).collect()
    }
}

pub fn extract(store: &EdgeStore, cfg: &PipelineConfig) -> Result<Vec<LifetimeRecord>> {
    extract_lifetimes(store, &cfg.extract_options())
}

pub fn cluster(
    store: &EdgeStore,
    records: &[LifetimeRecord],
    cfg: &PipelineConfig,
    embeddings: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<ClusterStage> {
    let (signals, skipped) = predicate_signals(store, records, cfg.signals.metric)?;
    let window = store.window_length();
    let (profiles, scaler) = build_profiles(&signals, window, cfg.clustering.min_obs, embeddings)?;
    let c = &cfg.clustering;
    let model = match c.method {
        ClusterMethod::Density => cluster_density(&profiles, &scaler, c.min_cluster_size, c.min_samples)?,
        ClusterMethod::Dpmixture => cluster_dpmixture(&profiles, &scaler, &cfg.dp_options())?,
    };
    Ok(ClusterStage { signals, skipped, profiles, scaler, model })
}

/// Fits the hierarchy and annotates `records` with their cluster.
pub fn fit(
    store: &EdgeStore,
    records: &mut [LifetimeRecord],
    stage: &ClusterStage,
    cfg: &PipelineConfig,
) -> Result<HierarchyModel> {
    let assignment = assign_predicates(&stage.model, &stage.signals, store.window_length())?;
    for r in records.iter_mut() {
        r.cluster = assignment.get(&r.predicate).copied();
    }
    fit_hierarchy(store, records, &stage.model, &assignment, &cfg.hierarchy_options())
}

/// All three stages.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub records: Vec<LifetimeRecord>,
    pub clusters: ClusterStage,
    pub model: HierarchyModel,
}

pub fn run(store: &EdgeStore, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let mut records = extract(store, cfg)?;
    let clusters = cluster(store, &records, cfg, None)?;
    let model = fit(store, &mut records, &clusters, cfg)?;
    Ok(PipelineRun { records, clusters, model })
}

//! Edge ranking by `sim^α · S(age)^β` at a query timestamp.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{effective_tau, HierarchyModel, Level};
use crate::kg::{DistanceMetric, Edge, EdgeStore};
use crate::signals::{concept_signals, LifetimeRecord};
use crate::survival::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    UniformExp,
    UniformHalflife,
    Level1,
    Level12,
    Level123,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::UniformExp,
        Method::UniformHalflife,
        Method::Level1,
        Method::Level12,
        Method::Level123,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::UniformExp => "uniform_exp",
            Method::UniformHalflife => "uniform_halflife",
            Method::Level1 => "level1",
            Method::Level12 => "level12",
            Method::Level123 => "level123",
        }
    }

    /// Deepest hierarchy level used, for the hierarchical methods.
    pub fn max_level(self) -> Option<Level> {
        match self {
            Method::Level1 => Some(Level::Cluster),
            Method::Level12 => Some(Level::Context),
            Method::Level123 => Some(Level::Entity),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown retrieval method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// Restricts exact matches to one subject when set.
    pub subject: Option<String>,
    pub predicate: String,
    pub t_q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub method: Method,
    /// Compared by cosine similarity with non-matching edges' values.
    pub embedding: Option<Vec<f64>>,
}

impl Query {
    pub fn new(subject: Option<&str>, predicate: &str, t_q: f64, method: Method) -> Self {
        Query {
            subject: subject.map(str::to_string),
            predicate: predicate.to_string(),
            t_q,
            alpha: 1.0,
            beta: 1.0,
            method,
            embedding: None,
        }
    }
}

/// Semantic similarity backend, in `[0, 1]`.
pub trait Similarity: Sync {
    fn sim(&self, edge: &Edge, query: &Query) -> f64;
}

/// 1 for the queried concept; otherwise cosine similarity with the query
/// embedding (clamped at 0) when one is given, else 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl Similarity for ExactMatch {
    fn sim(&self, edge: &Edge, query: &Query) -> f64 {
        let subject_ok = query.subject.as_deref().is_none_or(|s| s == edge.subject);
        if subject_ok && edge.predicate == query.predicate {
            return 1.0;
        }
        match &query.embedding {
            Some(q) if q.len() == edge.value.embedding.len() => {
                let d = crate::kg::vector_distance(q, &edge.value.embedding, DistanceMetric::Cosine).unwrap_or(1.0);
                (1.0 - d).clamp(0.0, 1.0)
            }
            _ => 0.0,
        }
    }
}

/// Fixed per-edge similarities, `default` for edges not listed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub by_edge: BTreeMap<u64, f64>,
    pub default: f64,
}

impl Similarity for SimilarityTable {
    fn sim(&self, edge: &Edge, _query: &Query) -> f64 {
        self.by_edge.get(&edge.id).copied().unwrap_or(self.default)
    }
}

/// Weibull parameters chosen for one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub tau_eff: f64,
    pub kappa: f64,
    pub level: Option<Level>,
    pub cluster: Option<i64>,
}

/// Supplies decay parameters for an edge given its concept covariates.
pub trait DecaySource: Sync {
    /// `sigma` is `None` when the concept has fewer than two observations.
    fn decay(&self, edge: &Edge, v: f64, sigma: Option<f64>, max_level: Level) -> Decay;
}

impl DecaySource for HierarchyModel {
    fn decay(&self, edge: &Edge, v: f64, sigma: Option<f64>, max_level: Level) -> Decay {
        let r = self.resolve_at(&edge.predicate, edge.context.as_deref(), Some(&edge.entity), max_level, None);
        let sigma = sigma.unwrap_or(r.params.covariate_mean.1);
        Decay {
            tau_eff: effective_tau(r.params, v, sigma),
            kappa: r.params.kappa,
            level: Some(r.level),
            cluster: Some(r.cluster),
        }
    }
}

/// Per-predicate `(τ, κ)` ignoring covariates and levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDecay {
    pub by_predicate: BTreeMap<String, (f64, f64)>,
    pub default: (f64, f64),
}

impl DecaySource for FixedDecay {
    fn decay(&self, edge: &Edge, _v: f64, _sigma: Option<f64>, _max_level: Level) -> Decay {
        let (tau_eff, kappa) = self.by_predicate.get(&edge.predicate).copied().unwrap_or(self.default);
        Decay { tau_eff, kappa, level: None, cluster: None }
    }
}

/// Single-rate baselines: exponential scale and half-life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformParams {
    pub tau: f64,
    pub halflife: f64,
}

impl UniformParams {
    /// Mean and median of observed supersession lifetimes.
    pub fn from_records(records: &[LifetimeRecord]) -> Result<Self> {
        let mut d: Vec<f64> = records.iter().filter(|r| r.event.is_event()).map(|r| r.duration).collect();
        if d.is_empty() {
            return Err(Error::AllCensored);
        }
        let tau = d.iter().sum::<f64>() / d.len() as f64;
        let halflife = median(&mut d).expect("non-empty");
        Ok(UniformParams { tau, halflife })
    }
}

/// Everything needed to score edges besides the query itself.
pub struct Scorer<'a> {
    pub store: &'a EdgeStore,
    pub decay: Option<&'a dyn DecaySource>,
    pub uniform: Option<UniformParams>,
    pub similarity: &'a dyn Similarity,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub edge_id: u64,
    pub t: f64,
    pub score: f64,
    pub sim: f64,
    pub freshness: f64,
    pub age_days: f64,
    pub tau_eff: Option<f64>,
    pub kappa: Option<f64>,
    pub level: Option<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub t_q: f64,
    pub method: Method,
    pub items: Vec<Scored>,
}

impl RankedResult {
    pub fn ids(&self) -> Vec<u64> {
        self.items.iter().map(|s| s.edge_id).collect()
    }
}

/// Concept velocity and volatility from edges observed up to `t_q`.
fn covariates_at(store: &EdgeStore, edge: &Edge, t_q: f64, metric: DistanceMetric) -> Result<(f64, Option<f64>)> {
    let hist: Vec<&Edge> = store
        .concept_history(&edge.subject, &edge.predicate)
        .into_iter()
        .filter(|e| e.t.0 <= t_q)
        .collect();
    let s = concept_signals(&hist, metric)?;
    Ok((s.velocity, s.volatility_defined.then_some(s.volatility)))
}

impl Scorer<'_> {
    fn freshness(&self, edge: &Edge, query: &Query, age: f64, cov: (f64, Option<f64>)) -> Result<(f64, Option<Decay>)> {
        let uniform = || {
            self.uniform
                .ok_or_else(|| Error::Config(format!("method {} needs uniform parameters", query.method.as_str())))
        };
        Ok(match query.method {
            Method::None => (1.0, None),
            Method::UniformExp => {
                let u = uniform()?;
                ((-age / u.tau).exp(), Some(Decay { tau_eff: u.tau, kappa: 1.0, level: None, cluster: None }))
            }
            Method::UniformHalflife => {
                let u = uniform()?;
                ((-age / u.halflife).exp2(), None)
            }
            m => {
                let src = self
                    .decay
                    .ok_or_else(|| Error::Config(format!("method {} needs a fitted model", m.as_str())))?;
                let d = src.decay(edge, cov.0, cov.1, m.max_level().expect("hierarchical method"));
                ((-(age / d.tau_eff).powf(d.kappa)).exp(), Some(d))
            }
        })
    }

    /// Score of one edge; edges created after `t_q` are rejected.
    pub fn score_edge(&self, edge: &Edge, query: &Query) -> Result<Scored> {
        let cov = covariates_at(self.store, edge, query.t_q, self.metric)?;
        self.score_with(edge, query, cov)
    }

    fn score_with(&self, edge: &Edge, query: &Query, cov: (f64, Option<f64>)) -> Result<Scored> {
        if edge.t.0 > query.t_q {
            return Err(Error::FutureEdge { edge: edge.id });
        }
        let age = query.t_q - edge.t.0;
        let sim = self.similarity.sim(edge, query);
        let (freshness, decay) = self.freshness(edge, query, age, cov)?;
        Ok(Scored {
            edge_id: edge.id,
            t: edge.t.0,
            score: sim.powf(query.alpha) * freshness.powf(query.beta),
            sim,
            freshness,
            age_days: age,
            tau_eff: decay.map(|d| d.tau_eff),
            kappa: decay.map(|d| d.kappa),
            level: decay.and_then(|d| d.level),
        })
    }

    /// Ranks the given store indices, skipping edges created after `t_q`.
    pub fn rank_candidates(&self, candidates: &[usize], query: &Query) -> Result<RankedResult> {
        let mut cov_cache: BTreeMap<(&str, &str), (f64, Option<f64>)> = BTreeMap::new();
        let mut items = Vec::new();
        for &i in candidates {
            let e = self.store.edge(i);
            if e.t.0 > query.t_q {
                continue;
            }
            let key = (e.subject.as_str(), e.predicate.as_str());
            let cov = match cov_cache.get(&key) {
                Some(&c) => c,
                None => {
                    let c = covariates_at(self.store, e, query.t_q, self.metric)?;
                    cov_cache.insert(key, c);
                    c
                }
            };
            items.push(self.score_with(e, query, cov)?);
        }
        sort_ranked(&mut items);
        Ok(RankedResult { t_q: query.t_q, method: query.method, items })
    }

    /// Ranks the queried subject's edges, or every edge when the query names
    /// no subject.
    pub fn rank(&self, query: &Query) -> Result<RankedResult> {
        match &query.subject {
            Some(s) => self.rank_candidates(self.store.subject_indices(s), query),
            None => {
                let all: Vec<usize> = (0..self.store.len()).collect();
                self.rank_candidates(&all, query)
            }
        }
    }
}

/// Descending score; ties go to the newer edge, then the lower id.
pub fn sort_ranked(items: &mut [Scored]) {
    items.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.t.total_cmp(&a.t))
            .then(a.edge_id.cmp(&b.edge_id))
    });
}

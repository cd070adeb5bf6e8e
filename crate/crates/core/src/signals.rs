//! Concept-level velocity and volatility, and survival-record extraction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{embed_distance, ConceptKey, DistanceMetric, Edge, EdgeStore};

pub const DEFAULT_EPSILON: f64 = 0.3;
pub const DEFAULT_MIN_DURATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConceptSignals {
    pub velocity: f64,
    pub volatility: f64,
    pub n_obs: usize,
    /// False when fewer than two observations exist; `volatility` is then 0.
    pub volatility_defined: bool,
}

/// Observations per day inside `[t - delta, t]`.
pub fn compute_velocity(history: &[&Edge], t: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    let n = history
        .iter()
        .filter(|e| e.t.0 >= t - delta && e.t.0 <= t)
        .count();
    n as f64 / delta
}

/// Mean distance between consecutive values; `None` with fewer than two.
pub fn compute_volatility(history: &[&Edge], metric: DistanceMetric) -> Result<Option<f64>> {
    if history.len() < 2 {
        return Ok(None);
    }
    let mut sum = 0.0;
    for pair in history.windows(2) {
        sum += embed_distance(&pair[0].value, &pair[1].value, metric)?;
    }
    Ok(Some(sum / (history.len() - 1) as f64))
}

/// Velocity over the concept's full observed span (at least one day) and volatility.
pub fn concept_signals(history: &[&Edge], metric: DistanceMetric) -> Result<ConceptSignals> {
    let n_obs = history.len();
    if n_obs == 0 {
        return Ok(ConceptSignals {
            velocity: 0.0,
            volatility: 0.0,
            n_obs: 0,
            volatility_defined: false,
        });
    }
    let first = history[0].t.0;
    let last = history[n_obs - 1].t.0;
    let delta = (last - first).max(1.0);
    let velocity = compute_velocity(history, last, delta);
    let vol = compute_volatility(history, metric)?;
    Ok(ConceptSignals {
        velocity,
        volatility: vol.unwrap_or(0.0),
        n_obs,
        volatility_defined: vol.is_some(),
    })
}

/// Signals of every concept in the store, keyed by `(subject, predicate)`.
pub fn all_concept_signals(
    store: &EdgeStore,
    metric: DistanceMetric,
) -> Result<BTreeMap<ConceptKey, ConceptSignals>> {
    let keys: Vec<(&ConceptKey, &[usize])> = store.concepts().collect();
    let computed: Result<Vec<(ConceptKey, ConceptSignals)>> = keys
        .par_iter()
        .map(|(k, ix)| {
            let h: Vec<&Edge> = ix.iter().map(|&i| store.edge(i)).collect();
            Ok(((*k).clone(), concept_signals(&h, metric)?))
        })
        .collect();
    Ok(computed?.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Superseded,
    Censored,
    Reinforcement,
}

impl EventKind {
    /// True for records that enter the likelihood through the density.
    pub fn is_event(self) -> bool {
        matches!(self, EventKind::Superseded)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Superseded => "superseded",
            EventKind::Censored => "censored",
            EventKind::Reinforcement => "reinforcement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRecord {
    pub edge_id: u64,
    pub duration: f64,
    pub event: EventKind,
    pub superseded_by: Option<u64>,
    pub velocity: f64,
    pub volatility: f64,
    pub subject: String,
    pub predicate: String,
    pub context: Option<String>,
    pub entity: String,
    pub cluster: Option<i64>,
}

/// Supersession thresholds: a default plus per-predicate overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub default: f64,
    #[serde(default)]
    pub per_predicate: BTreeMap<String, f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::uniform(DEFAULT_EPSILON)
    }
}

impl Thresholds {
    pub fn uniform(eps: f64) -> Self {
        Thresholds {
            default: eps,
            per_predicate: BTreeMap::new(),
        }
    }

    pub fn for_predicate(&self, predicate: &str) -> f64 {
        self.per_predicate
            .get(predicate)
            .copied()
            .unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |x: f64| !(x.is_finite() && x > 0.0);
        if bad(self.default) || self.per_predicate.values().any(|&x| bad(x)) {
            return Err(Error::Config("supersession thresholds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub thresholds: Thresholds,
    pub metric: DistanceMetric,
    pub min_duration: f64,
    /// Measure durations from the most recent observation of the live value
    /// instead of from its creation.
    pub reset_clock: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            thresholds: Thresholds::default(),
            metric: DistanceMetric::Euclidean,
            min_duration: DEFAULT_MIN_DURATION,
            reset_clock: false,
        }
    }
}

/// Walks every concept in time order and emits superseded, reinforcement and
/// final censored records. Output is ordered by concept key, then time.
pub fn extract_lifetimes(store: &EdgeStore, opts: &ExtractOptions) -> Result<Vec<LifetimeRecord>> {
    opts.thresholds.validate()?;
    let signals = all_concept_signals(store, opts.metric)?;
    let imputed = predicate_mean_volatility(&signals);
    let t_now = store.window_end();
    let keys: Vec<(&ConceptKey, &[usize])> = store.concepts().collect();
    let per_concept: Result<Vec<Vec<LifetimeRecord>>> = keys
        .par_iter()
        .map(|(key, ix)| {
            let sig = signals[*key];
            let vol = if sig.volatility_defined {
                sig.volatility
            } else {
                imputed.get(&key.1).copied().unwrap_or(0.0)
            };
            let history: Vec<&Edge> = ix.iter().map(|&i| store.edge(i)).collect();
            walk_concept(&history, t_now, sig.velocity, vol, opts)
        })
        .collect();
    Ok(per_concept?.into_iter().flatten().collect())
}

/// Mean volatility per predicate over concepts where it is defined.
pub fn predicate_mean_volatility(
    signals: &BTreeMap<ConceptKey, ConceptSignals>,
) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((_, p), s) in signals {
        if s.volatility_defined {
            let e = acc.entry(p.clone()).or_default();
            e.0 += s.volatility;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(p, (sum, n))| (p, sum / n as f64))
        .collect()
}

fn walk_concept(
    history: &[&Edge],
    t_now: f64,
    velocity: f64,
    volatility: f64,
    opts: &ExtractOptions,
) -> Result<Vec<LifetimeRecord>> {
    let mut out = Vec::new();
    let Some(first) = history.first() else {
        return Ok(out);
    };
    let eps = opts.thresholds.for_predicate(&first.predicate);
    let record = |live: &Edge, duration: f64, event: EventKind, by: Option<u64>| LifetimeRecord {
        edge_id: live.id,
        duration: duration.max(opts.min_duration),
        event,
        superseded_by: by,
        velocity,
        volatility,
        subject: live.subject.clone(),
        predicate: live.predicate.clone(),
        context: live.context.clone(),
        entity: live.entity.clone(),
        cluster: None,
    };
    let mut live = *first;
    let mut clock = live.t.0;
    for &next in &history[1..] {
        let d = embed_distance(&live.value, &next.value, opts.metric)?;
        let duration = next.t.0 - clock;
        if d > eps {
            out.push(record(live, duration, EventKind::Superseded, Some(next.id)));
            live = next;
            clock = live.t.0;
        } else {
            out.push(record(live, duration, EventKind::Reinforcement, None));
            if opts.reset_clock {
                clock = next.t.0;
            }
        }
    }
    out.push(record(live, t_now - clock, EventKind::Censored, None));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSignals {
    pub predicate: String,
    pub velocity: f64,
    pub volatility: f64,
    /// Mean superseded lifetime; `None` without supersessions.
    pub mean_lifetime: Option<f64>,
    pub rho: f64,
    pub sup_rate: f64,
    pub n_superseded: usize,
    pub n_reinforcement: usize,
    pub n_censored: usize,
    pub n_concepts: usize,
}

impl PredicateSignals {
    pub fn n_records(&self) -> usize {
        self.n_superseded + self.n_reinforcement + self.n_censored
    }
}

/// Aggregates concept signals and lifetime records per predicate. Returns the
/// map and the predicates present in the store that have no records.
pub fn predicate_signals(
    store: &EdgeStore,
    records: &[LifetimeRecord],
    metric: DistanceMetric,
) -> Result<(BTreeMap<String, PredicateSignals>, Vec<String>)> {
    let signals = all_concept_signals(store, metric)?;
    let mut vel: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut vol: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for ((_, p), s) in &signals {
        let e = vel.entry(p.as_str()).or_default();
        e.0 += s.velocity;
        e.1 += 1;
        if s.volatility_defined {
            let e = vol.entry(p.as_str()).or_default();
            e.0 += s.volatility;
            e.1 += 1;
        }
    }

    #[derive(Default)]
    struct Counts {
        sup: usize,
        rein: usize,
        cens: usize,
        sup_total: f64,
    }
    let mut counts: BTreeMap<&str, Counts> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.predicate.as_str()).or_default();
        match r.event {
            EventKind::Superseded => {
                c.sup += 1;
                c.sup_total += r.duration;
            }
            EventKind::Reinforcement => c.rein += 1,
            EventKind::Censored => c.cens += 1,
        }
    }

    let mut out = BTreeMap::new();
    let mut skipped = Vec::new();
    for (p, &(vsum, n_concepts)) in &vel {
        let Some(c) = counts.get(p) else {
            skipped.push(p.to_string());
            continue;
        };
        let volatility = vol.get(p).map(|&(s, n)| s / n as f64).unwrap_or(0.0);
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        out.insert(
            p.to_string(),
            PredicateSignals {
                predicate: p.to_string(),
                velocity: vsum / n_concepts as f64,
                volatility,
                mean_lifetime: (c.sup > 0).then(|| c.sup_total / c.sup as f64),
                rho: ratio(c.sup, c.rein),
                sup_rate: ratio(c.sup, c.cens),
                n_superseded: c.sup,
                n_reinforcement: c.rein,
                n_censored: c.cens,
                n_concepts,
            },
        );
    }
    Ok((out, skipped))
}

/// Writes records as CSV with the columns
/// `edge_id,predicate,context,entity,duration_days,event,velocity,volatility`.
pub fn write_records_csv<W: std::io::Write>(records: &[LifetimeRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "edge_id",
        "predicate",
        "context",
        "entity",
        "duration_days",
        "event",
        "velocity",
        "volatility",
    ])?;
    for r in records {
        wtr.write_record([
            r.edge_id.to_string(),
            r.predicate.clone(),
            r.context.clone().unwrap_or_default(),
            r.entity.clone(),
            r.duration.to_string(),
            r.event.as_str().to_string(),
            r.velocity.to_string(),
            r.volatility.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Synthetic temporal knowledge graph with planted clusters, contexts and
//! entities, plus the ground-truth event log.
//!
//! Each entity slot observes one predicate of its cluster. Value lifetimes are
//! drawn from a Weibull with the slot's scale and the cluster's shape and
//! chained from day 0 to the end of the window. Reinforcements arrive as a
//! Poisson process between supersessions and re-emit the live value with a
//! small perturbation. Subjects group one slot from each cluster, so every
//! subject carries a mix of fast and slow predicates.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Edge, EdgeStore, Timestamp, Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub name: String,
    pub tau_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub tau_base: f64,
    pub kappa: f64,
    /// Reinforcement observations per day.
    pub velocity: f64,
    /// Mean supersession jump distance before the `2ε` minimum is applied;
    /// also scales the reinforcement perturbation.
    pub volatility: f64,
    pub value_kind: ValueKind,
    pub contexts: Vec<ContextSpec>,
    /// Predicate names; padded with generated names up to the predicate count.
    #[serde(default)]
    pub predicates: Vec<String>,
    /// Overrides `predicates_per_cluster` for this cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_predicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub clusters: Vec<ClusterSpec>,
    pub predicates_per_cluster: usize,
    /// Inclusive range of entity slots per context.
    pub entities_per_context: (usize, usize),
    /// Standard deviation of the per-entity log-scale noise.
    pub sigma_entity: f64,
    pub window_days: f64,
    pub epsilon: f64,
    pub embed_dim: usize,
    /// Multiplier from cluster volatility to jump distance.
    pub volatility_scale: f64,
    /// Reinforcement perturbation radius as a fraction of cluster volatility,
    /// capped below `ε/2`.
    pub reinforcement_noise: f64,
    pub seed: u64,
}

fn ctx(name: &str, m: f64) -> ContextSpec {
    ContextSpec {
        name: name.into(),
        tau_multiplier: m,
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            clusters: vec![
                ClusterSpec {
                    name: "volatile_measurements".into(),
                    tau_base: 20.0,
                    kappa: 1.0,
                    velocity: 0.8,
                    volatility: 0.7,
                    value_kind: ValueKind::Numeric,
                    contexts: vec![ctx("icu", 0.12), ctx("ward", 0.26), ctx("outpatient", 1.3)],
                    predicates: names(&["heart_rate", "blood_pressure", "spo2", "temperature", "respiratory_rate"]),
                    n_predicates: None,
                },
                ClusterSpec {
                    name: "current_state".into(),
                    tau_base: 245.0,
                    kappa: 1.2,
                    velocity: 0.1,
                    volatility: 0.4,
                    value_kind: ValueKind::Categorical,
                    contexts: vec![ctx("aggressive", 0.21), ctx("routine", 0.6), ctx("stable", 1.44)],
                    predicates: names(&["medication", "dose", "treatment_plan", "care_team", "disease_status"]),
                    n_predicates: None,
                },
                ClusterSpec {
                    name: "periodic_labs".into(),
                    tau_base: 90.0,
                    kappa: 0.8,
                    velocity: 0.03,
                    volatility: 0.3,
                    value_kind: ValueKind::Numeric,
                    contexts: vec![ctx("quarterly", 1.30), ctx("annual", 2.81), ctx("specialist", 2.11)],
                    predicates: names(&["hba1c", "lipid_panel", "bmi", "egfr", "vitamin_d"]),
                    n_predicates: None,
                },
                ClusterSpec {
                    name: "permanent_facts".into(),
                    tau_base: 2981.0,
                    kappa: 0.5,
                    velocity: 0.01,
                    volatility: 0.02,
                    value_kind: ValueKind::Categorical,
                    contexts: vec![ctx("genomic", 1.74), ctx("demographic", 0.95), ctx("established", 1.43)],
                    predicates: names(&["genotype", "blood_type", "birth_sex", "allergy", "chronic_diagnosis"]),
                    n_predicates: None,
                },
            ],
            predicates_per_cluster: 5,
            entities_per_context: (10, 30),
            sigma_entity: 0.2,
            window_days: 5.0 * 365.0,
            epsilon: 0.3,
            embed_dim: 8,
            volatility_scale: 1.0,
            reinforcement_noise: 0.25,
            seed: 42,
        }
    }
}

impl ClusterSpec {
    fn predicate_names(&self, default_count: usize) -> Vec<String> {
        let n = self.n_predicates.unwrap_or(default_count);
        (0..n)
            .map(|i| self.predicates.get(i).cloned().unwrap_or_else(|| format!("{}_{i}", self.name)))
            .collect()
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if self.clusters.is_empty() {
            return Err(Error::Config("at least one cluster is required".into()));
        }
        if !(pos(self.window_days) && pos(self.epsilon) && self.embed_dim > 0 && self.sigma_entity >= 0.0) {
            return Err(Error::Config("window, epsilon and embed_dim must be positive".into()));
        }
        if !(pos(self.volatility_scale) && self.reinforcement_noise >= 0.0) {
            return Err(Error::Config("volatility_scale must be positive".into()));
        }
        let (lo, hi) = self.entities_per_context;
        if lo == 0 || lo > hi {
            return Err(Error::Config("entities_per_context must be a non-empty range of positive counts".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.clusters {
            if !(pos(c.tau_base) && pos(c.kappa) && pos(c.velocity) && pos(c.volatility)) {
                return Err(Error::Config(format!("cluster {}: rates and scales must be positive", c.name)));
            }
            if c.contexts.is_empty() || c.contexts.iter().any(|x| !pos(x.tau_multiplier)) {
                return Err(Error::Config(format!("cluster {}: needs contexts with positive multipliers", c.name)));
            }
            let preds = c.predicate_names(self.predicates_per_cluster);
            if preds.is_empty() {
                return Err(Error::Config(format!("cluster {} has no predicates", c.name)));
            }
            for p in preds {
                if !seen.insert(p.clone()) {
                    return Err(Error::Config(format!("predicate {p} appears twice")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEntity {
    pub entity: String,
    pub subject: String,
    pub predicate: String,
    pub cluster: usize,
    pub context: String,
    pub tau: f64,
    pub kappa: f64,
}

/// A planted supersession: `edge_id` was replaced by `superseded_by` after
/// `duration` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub edge_id: u64,
    pub superseded_by: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub name: String,
    pub tau_base: f64,
    pub kappa: f64,
    pub velocity: f64,
    pub volatility: f64,
    /// Context name and its planted scale `τ_base · multiplier`.
    pub contexts: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub window: (f64, f64),
    pub n_edges: usize,
    /// Predicate name to planted cluster index.
    pub predicate_cluster: BTreeMap<String, usize>,
    pub predicate_embeddings: BTreeMap<String, Vec<f64>>,
    pub clusters: Vec<PlantedCluster>,
    pub entities: Vec<PlantedEntity>,
    pub events: Vec<PlantedEvent>,
    /// Number of final (censored) live spans, one per concept.
    pub n_censored: usize,
}

impl GroundTruth {
    /// Planted cluster labels in the order of `predicates`; unknown → −1.
    pub fn labels_for(&self, predicates: &[String]) -> Vec<i64> {
        predicates
            .iter()
            .map(|p| self.predicate_cluster.get(p).map(|&c| c as i64).unwrap_or(-1))
            .collect()
    }

    pub fn cluster_index(&self, name: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.name == name)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Stable per-stream seed derived from the master seed and a key.
fn sub_seed(seed: u64, key: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in key.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    // SplitMix64 finalizer.
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, key))
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn offset(base: &[f64], dir: &[f64], dist: f64) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + d * dist).collect()
}

/// Weibull draw by inversion.
fn weibull(rng: &mut ChaCha8Rng, tau: f64, kappa: f64) -> f64 {
    let u: f64 = rng.random::<f64>();
    tau * (-(1.0 - u).ln()).powf(1.0 / kappa)
}

/// Quantizes a lifetime to whole days unless it is shorter than one day.
fn quantize_lifetime(l: f64) -> f64 {
    if l >= 1.0 {
        l.round()
    } else {
        l
    }
}

struct Pending {
    t: f64,
    seq: u64,
    subject: String,
    predicate: String,
    entity: String,
    context: String,
    kind: ValueKind,
    raw: String,
    embedding: Vec<f64>,
}

struct Slot {
    cluster: usize,
    context: usize,
    entity: String,
    predicate: String,
    subject: String,
}

/// Generates the store and its ground truth. Deterministic given the config.
pub fn generate(config: &GenConfig) -> Result<(EdgeStore, GroundTruth)> {
    config.validate()?;
    let seed = config.seed;
    let window = config.window_days;
    let eps = config.epsilon;
    let dim = config.embed_dim;

    // Entity slots, round-robin over each cluster's predicates.
    let mut slots = Vec::new();
    let mut predicate_cluster = BTreeMap::new();
    let mut predicate_embeddings = BTreeMap::new();
    for (k, c) in config.clusters.iter().enumerate() {
        let preds = c.predicate_names(config.predicates_per_cluster);
        let mut erng = rng_for(seed, &format!("predicate-embeddings/{}", c.name));
        let anchor: Vec<f64> = (0..dim).map(|_| 3.0 * erng.sample::<f64, _>(StandardNormal)).collect();
        for p in &preds {
            predicate_cluster.insert(p.clone(), k);
            let mut prng = rng_for(seed, &format!("predicate-embedding/{p}"));
            let e: Vec<f64> = anchor.iter().map(|a| a + 0.3 * prng.sample::<f64, _>(StandardNormal)).collect();
            predicate_embeddings.insert(p.clone(), e);
        }
        let mut slot_index = 0usize;
        for (ci, cx) in c.contexts.iter().enumerate() {
            let mut crng = rng_for(seed, &format!("entities/{}/{}", c.name, cx.name));
            let (lo, hi) = config.entities_per_context;
            let count = crng.random_range(lo..=hi);
            for e in 0..count {
                slots.push(Slot {
                    cluster: k,
                    context: ci,
                    entity: format!("{}-{}-{e:02}", c.name, cx.name),
                    predicate: preds[slot_index % preds.len()].clone(),
                    subject: format!("patient-{slot_index:03}"),
                });
                slot_index += 1;
            }
        }
    }

    let mut pending: Vec<Pending> = Vec::new();
    // (duration, superseded pending index, superseding pending index)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    let mut entities = Vec::with_capacity(slots.len());
    let mut seq = 0u64;
    for slot in &slots {
        let c = &config.clusters[slot.cluster];
        let cx = &c.contexts[slot.context];
        let mut rng = rng_for(seed, &format!("slot/{}/{}", slot.entity, slot.predicate));
        let noise: f64 = if config.sigma_entity > 0.0 {
            Normal::new(0.0, config.sigma_entity).expect("validated").sample(&mut rng)
        } else {
            0.0
        };
        let tau = c.tau_base * cx.tau_multiplier * noise.exp();
        entities.push(PlantedEntity {
            entity: slot.entity.clone(),
            subject: slot.subject.clone(),
            predicate: slot.predicate.clone(),
            cluster: slot.cluster,
            context: cx.name.clone(),
            tau,
            kappa: c.kappa,
        });
        let jump_mean = (2.0 * eps).max(c.volatility * config.volatility_scale);
        let jump = Normal::new(jump_mean, 0.1 * eps).expect("positive sd");
        let radius = (c.volatility * config.reinforcement_noise).min(0.45 * eps);
        let gaps = Exp::new(c.velocity).expect("validated");

        let mut value: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut value_index = 0usize;
        let mut t_live = 0.0f64;
        let push = |pending: &mut Vec<Pending>, seq: &mut u64, t: f64, raw: String, emb: Vec<f64>| {
            pending.push(Pending {
                t,
                seq: *seq,
                subject: slot.subject.clone(),
                predicate: slot.predicate.clone(),
                entity: slot.entity.clone(),
                context: cx.name.clone(),
                kind: c.value_kind,
                raw,
                embedding: emb,
            });
            *seq += 1;
            pending.len() - 1
        };
        let mut live_pending = push(&mut pending, &mut seq, 0.0, format!("{}#{value_index}", slot.entity), value.clone());
        loop {
            let lifetime = quantize_lifetime(weibull(&mut rng, tau, c.kappa));
            let t_next = t_live + lifetime;
            let end = t_next.min(window);
            // Reinforcements on whole-day offsets from the live edge.
            let mut t_r = t_live;
            loop {
                t_r += gaps.sample(&mut rng);
                let at = t_live + (t_r - t_live).floor();
                if t_r >= end || at >= end {
                    break;
                }
                let dir = unit_vector(&mut rng, dim);
                let r = radius * rng.random_range(0.5..1.0);
                let emb = offset(&value, &dir, r);
                push(&mut pending, &mut seq, at, format!("{}#{value_index}", slot.entity), emb);
            }
            if t_next >= window {
                break;
            }
            let dir = unit_vector(&mut rng, dim);
            let dist = jump.sample(&mut rng).max(1.01 * eps);
            value = offset(&value, &dir, dist);
            value_index += 1;
            let next = push(&mut pending, &mut seq, t_next, format!("{}#{value_index}", slot.entity), value.clone());
            events.push((lifetime, live_pending, next));
            live_pending = next;
            t_live = t_next;
        }
    }

    // Ids follow global (time, generation) order.
    let mut order: Vec<usize> = (0..pending.len()).collect();
    order.sort_by(|&a, &b| pending[a].t.total_cmp(&pending[b].t).then(pending[a].seq.cmp(&pending[b].seq)));
    let mut id_of = vec![0u64; pending.len()];
    for (id, &i) in order.iter().enumerate() {
        id_of[i] = id as u64;
    }
    let mut planted: Vec<PlantedEvent> = events
        .iter()
        .map(|&(duration, from, to)| PlantedEvent {
            edge_id: id_of[from],
            superseded_by: id_of[to],
            duration,
        })
        .collect();
    planted.sort_by_key(|e| e.edge_id);
    let edges: Vec<Edge> = order
        .iter()
        .map(|&i| {
            let p = &pending[i];
            Edge {
                id: id_of[i],
                subject: p.subject.clone(),
                predicate: p.predicate.clone(),
                value: Value {
                    kind: p.kind,
                    raw: p.raw.clone(),
                    embedding: p.embedding.clone(),
                },
                t: Timestamp(p.t),
                context: Some(p.context.clone()),
                entity: p.entity.clone(),
            }
        })
        .collect();
    let n_edges = edges.len();
    let store = EdgeStore::from_edges(edges)?.with_window(0.0, window);
    let truth = GroundTruth {
        seed,
        window: (0.0, window),
        n_edges,
        predicate_cluster,
        predicate_embeddings,
        clusters: config
            .clusters
            .iter()
            .map(|c| PlantedCluster {
                name: c.name.clone(),
                tau_base: c.tau_base,
                kappa: c.kappa,
                velocity: c.velocity,
                volatility: c.volatility,
                contexts: c.contexts.iter().map(|x| (x.name.clone(), c.tau_base * x.tau_multiplier)).collect(),
            })
            .collect(),
        entities,
        events: planted,
        n_censored: slots.len(),
    };
    Ok((store, truth))
}

/// Writes `edges.jsonl` and `truth.json` into `dir`.
pub fn dump(store: &EdgeStore, truth: &GroundTruth, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    store.write_jsonl(&dir.join("edges.jsonl"))?;
    let mut w = BufWriter::new(File::create(dir.join("truth.json"))?);
    serde_json::to_writer_pretty(&mut w, truth)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            entities_per_context: (2, 3),
            window_days: 400.0,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let (a, ta) = generate(&small()).unwrap();
        let (b, tb) = generate(&small()).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(ta, tb);
    }

    #[test]
    fn seed_changes_output() {
        let mut c = small();
        let (a, _) = generate(&c).unwrap();
        c.seed = 7;
        let (b, _) = generate(&c).unwrap();
        assert_ne!(a.edges(), b.edges());
    }

    #[test]
    fn per_concept_order_matches_generation() {
        let (store, truth) = generate(&small()).unwrap();
        for ev in &truth.events {
            let a = store.edge(ev.edge_id as usize);
            let b = store.edge(ev.superseded_by as usize);
            assert_eq!(a.subject, b.subject);
            assert_eq!(a.predicate, b.predicate);
            assert!((b.t.0 - a.t.0 - ev.duration).abs() < 1e-9);
        }
    }

    #[test]
    fn jumps_exceed_threshold_and_reinforcements_stay_close() {
        let cfg = small();
        let (store, truth) = generate(&cfg).unwrap();
        for ev in &truth.events {
            let a = &store.edge(ev.edge_id as usize).value.embedding;
            let b = &store.edge(ev.superseded_by as usize).value.embedding;
            let d = crate::kg::vector_distance(a, b, crate::kg::DistanceMetric::Euclidean).unwrap();
            assert!(d > cfg.epsilon);
        }
    }

    #[test]
    fn exponential_lifetimes_have_planted_mean() {
        let mut rng = rng_for(1, "mean-check");
        let n = 20_000;
        let mean = (0..n).map(|_| weibull(&mut rng, 50.0, 1.0)).sum::<f64>() / n as f64;
        assert!((mean / 50.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small();
        c.epsilon = 0.0;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        let mut c = small();
        c.clusters[0].contexts[0].tau_multiplier = -1.0;
        assert!(generate(&c).is_err());
        let mut c = small();
        c.entities_per_context = (5, 2);
        assert!(generate(&c).is_err());
    }

    #[test]
    fn sub_seeds_are_distinct() {
        assert_ne!(sub_seed(42, "a"), sub_seed(42, "b"));
        assert_ne!(sub_seed(42, "a"), sub_seed(43, "a"));
    }
}

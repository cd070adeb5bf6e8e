#![allow(dead_code)]

use std::sync::OnceLock;

use shelflife::kg::EdgeStore;
use shelflife::pipeline::{self, PipelineConfig, PipelineRun};
use shelflife::synthgen::{self, GenConfig, GroundTruth};

pub struct Fixture {
    pub store: EdgeStore,
    pub truth: GroundTruth,
    pub cfg: PipelineConfig,
    pub run: PipelineRun,
}

fn build(gen: GenConfig) -> Fixture {
    let (store, truth) = synthgen::generate(&gen).unwrap();
    let store = store.with_window(truth.window.0, truth.window.1);
    let cfg = PipelineConfig { generator: gen, ..PipelineConfig::default() };
    let run = pipeline::run(&store, &cfg).unwrap();
    Fixture { store, truth, cfg, run }
}

/// Default generator, seed 42.
pub fn full() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(GenConfig::default()))
}

/// A few entities per context over a shorter window.
pub fn small() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        build(GenConfig { entities_per_context: (3, 4), window_days: 730.0, ..GenConfig::default() })
    })
}

use shelflife::kg::{Edge, Timestamp, Value, ValueKind};

pub fn edge(id: u64, subject: &str, predicate: &str, raw: &str, t: f64, embedding: Vec<f64>) -> Edge {
    Edge {
        id,
        subject: subject.into(),
        predicate: predicate.into(),
        value: Value { kind: ValueKind::Text, raw: raw.into(), embedding },
        t: Timestamp(t),
        context: None,
        entity: subject.into(),
    }
}

/// The six-edge melanoma patient graph: three blood-pressure readings, a
/// BRAF result and two treatments.
pub fn melanoma() -> EdgeStore {
    let e = |id, p, v: &str, t, x: f64| edge(id, "patient-a", p, v, t, vec![x, 1.0 - x]);
    EdgeStore::from_edges(vec![
        e(1, "blood_pressure", "120/80", 100.0, 0.1),
        e(2, "blood_pressure", "145/95", 104.0, 0.5),
        e(3, "blood_pressure", "130/85", 108.0, 0.3),
        e(4, "BRAF_status", "V600E", 50.0, 0.9),
        e(5, "treatment", "pembrolizumab", 80.0, 0.2),
        e(6, "treatment", "nivo+ipi", 200.0, 0.8),
    ])
    .unwrap()
}

pub fn melanoma_similarity() -> shelflife::retrieval::SimilarityTable {
    shelflife::retrieval::SimilarityTable {
        by_edge: [(1, 0.7), (2, 0.7), (3, 0.7), (4, 0.5), (5, 0.8), (6, 0.8)].into_iter().collect(),
        default: 0.0,
    }
}

/// κ = 1 shelf lives per predicate.
pub fn melanoma_decay() -> shelflife::retrieval::FixedDecay {
    shelflife::retrieval::FixedDecay {
        by_predicate: [
            ("blood_pressure".to_string(), (4.0, 1.0)),
            ("BRAF_status".to_string(), (3847.0, 1.0)),
            ("treatment".to_string(), (98.0, 1.0)),
        ]
        .into_iter()
        .collect(),
        default: (1.0, 1.0),
    }
}

mod common;

use std::collections::BTreeMap;

use shelflife::clustering::{assign_cold_start, raw_features, ColdStart};
use shelflife::eval::threshold_sweep;
use shelflife::kg::{load_edges, EdgeStore};
use shelflife::pipeline::{self, PipelineConfig};
use shelflife::signals::{extract_lifetimes, predicate_signals, EventKind, ExtractOptions, Thresholds};
use shelflife::synthgen::{self, load_truth, GenConfig};

#[test]
fn edge_store_round_trips_through_jsonl() {
    let (store, truth) = synthgen::generate(&GenConfig {
        entities_per_context: (1, 1),
        window_days: 200.0,
        ..GenConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    synthgen::dump(&store, &truth, dir.path()).unwrap();
    let back = load_edges(&dir.path().join("edges.jsonl")).unwrap();
    assert_eq!(back.edges(), store.edges());
    let (lo, hi) = back.window().unwrap();
    let ts: Vec<f64> = store.edges().iter().map(|e| e.t.0).collect();
    assert_eq!(lo, ts.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(hi, ts.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    assert_eq!(load_truth(&dir.path().join("truth.json")).unwrap(), truth);
}

#[test]
fn extraction_recovers_planted_events() {
    let f = common::full();
    let extracted: BTreeMap<u64, (u64, f64)> = f
        .run
        .records
        .iter()
        .filter(|r| r.event == EventKind::Superseded)
        .map(|r| (r.edge_id, (r.superseded_by.unwrap(), r.duration)))
        .collect();
    let recovered = f
        .truth
        .events
        .iter()
        .filter(|ev| {
            extracted
                .get(&ev.edge_id)
                .is_some_and(|&(by, d)| by == ev.superseded_by && (d - ev.duration).abs() <= 1e-6 * ev.duration.max(1.0))
        })
        .count();
    let recall = recovered as f64 / f.truth.events.len() as f64;
    let precision = recovered as f64 / extracted.len() as f64;
    assert!(recall >= 0.99 && precision >= 0.99, "recall {recall}, precision {precision}");
    let censored = f.run.records.iter().filter(|r| r.event == EventKind::Censored).count();
    assert_eq!(censored, f.truth.n_censored);
}

#[test]
fn threshold_beyond_every_distance_removes_supersessions() {
    let f = common::small();
    let opts = ExtractOptions { thresholds: Thresholds::uniform(1e3), ..ExtractOptions::default() };
    let recs = extract_lifetimes(&f.store, &opts).unwrap();
    assert!(recs.iter().all(|r| r.event != EventKind::Superseded));
    assert_eq!(recs.len(), f.store.len());
}

#[test]
fn sweep_supersessions_fall_as_threshold_rises() {
    let f = common::small();
    let truth = &f.truth;
    let reference = |names: &[String]| truth.labels_for(names);
    let rows = threshold_sweep(&f.store, &f.cfg, &[0.1, 0.3, 0.75, 1.0], Some(&reference)).unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[1].n_superseded <= w[0].n_superseded, "{} > {}", w[1].n_superseded, w[0].n_superseded);
        assert_eq!(w[0].n_superseded + w[0].n_reinforcement, w[1].n_superseded + w[1].n_reinforcement);
    }
    assert!(rows.iter().all(|r| r.ari.is_some() && r.kappa_delta.len() == r.clusters_by_tau.len()));
    assert!(threshold_sweep(&f.store, &f.cfg, &[0.3], None).is_err());
}

#[test]
fn held_out_predicate_joins_its_planted_cluster() {
    let mut gen = GenConfig::default();
    gen.clusters[2].predicates.push("ferritin".into());
    gen.clusters[2].n_predicates = Some(6);
    let (full, truth) = synthgen::generate(&gen).unwrap();
    assert_eq!(truth.predicate_cluster.len(), 21);
    let full = full.with_window(truth.window.0, truth.window.1);
    let kept: Vec<_> = full.edges().iter().filter(|e| e.predicate != "ferritin").cloned().collect();
    let reduced = EdgeStore::from_edges(kept).unwrap().with_window(truth.window.0, truth.window.1);

    let cfg = PipelineConfig::default();
    let mut records = pipeline::extract(&reduced, &cfg).unwrap();
    let embeddings = truth.predicate_embeddings.clone();
    let stage = pipeline::cluster(&reduced, &records, &cfg, Some(&embeddings)).unwrap();
    let model = pipeline::fit(&reduced, &mut records, &stage, &cfg).unwrap();
    assert_eq!(stage.model.n_clusters(), 4);
    let sibling = truth.predicate_cluster.iter().find(|(p, &c)| c == 2 && p.as_str() != "ferritin").unwrap().0;
    let expected = stage.model.label(sibling).unwrap();

    let all_records = pipeline::extract(&full, &cfg).unwrap();
    let (signals, _) = predicate_signals(&full, &all_records, cfg.signals.metric).unwrap();
    let raw = raw_features(&signals["ferritin"], full.window_length());
    assert_eq!(assign_cold_start(&stage.model, ColdStart::Profile(&raw)).unwrap(), expected);
    let emb = &embeddings["ferritin"];
    assert_eq!(assign_cold_start(&stage.model, ColdStart::Embedding(emb)).unwrap(), expected);

    let r = model.resolve_at("ferritin", None, None, shelflife::hierarchy::Level::Cluster, Some(ColdStart::Profile(&raw)));
    assert!(r.cold_start);
    assert_eq!(r.cluster, expected);
}

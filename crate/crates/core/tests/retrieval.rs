mod common;

use proptest::prelude::*;
use shelflife::kg::EdgeStore;
use shelflife::retrieval::{
    ExactMatch, FixedDecay, Method, Query, RankedResult, Scorer, SimilarityTable, UniformParams,
};
use shelflife::Error;

fn rank(store: &EdgeStore, sim: &SimilarityTable, decay: &FixedDecay, t_q: f64, method: Method) -> RankedResult {
    let scorer = Scorer {
        store,
        decay: Some(decay),
        uniform: Some(UniformParams { tau: 90.0, halflife: 90.0 * std::f64::consts::LN_2 }),
        similarity: sim,
        metric: Default::default(),
    };
    scorer.rank(&Query::new(Some("patient-a"), "status", t_q, method)).unwrap()
}

#[test]
fn uniform_decay_buries_the_permanent_fact() {
    let store = common::melanoma();
    let r = rank(&store, &common::melanoma_similarity(), &common::melanoma_decay(), 210.0, Method::UniformExp);
    assert_eq!(r.ids(), vec![6, 3, 2, 1, 5, 4]);
    let braf = r.items.last().unwrap();
    assert!((braf.score - 0.5 * (-160.0f64 / 90.0).exp()).abs() < 1e-12);
    assert!((braf.score - 0.084).abs() < 0.001);
    assert!((r.items[0].score - 0.716).abs() < 0.001);
}

#[test]
fn learned_decay_surfaces_current_and_permanent_facts() {
    let store = common::melanoma();
    let r = rank(&store, &common::melanoma_similarity(), &common::melanoma_decay(), 210.0, Method::Level1);
    assert_eq!(&r.ids()[..3], &[6, 4, 5]);
    for s in &r.items[3..] {
        assert!(s.score < 1e-9);
    }
}

#[test]
fn historical_query_sees_only_earlier_edges() {
    let store = common::melanoma();
    let r = rank(&store, &common::melanoma_similarity(), &common::melanoma_decay(), 105.0, Method::Level1);
    assert!(!r.ids().contains(&6));
    assert_eq!(r.items.len(), 4);
    let treatments: Vec<u64> = r.ids().into_iter().filter(|&id| id == 5 || id == 6).collect();
    assert_eq!(treatments, vec![5]);
    assert!((r.items.iter().find(|s| s.edge_id == 5).unwrap().freshness - (-25.0f64 / 98.0).exp()).abs() < 1e-12);

    let scorer = Scorer {
        store: &store,
        decay: None,
        uniform: None,
        similarity: &ExactMatch,
        metric: Default::default(),
    };
    let q = Query::new(Some("patient-a"), "treatment", 105.0, Method::None);
    assert!(matches!(scorer.score_edge(store.edge(5), &q), Err(Error::FutureEdge { edge: 6 })));
}

#[test]
fn hierarchical_methods_need_a_model() {
    let store = common::melanoma();
    let scorer = Scorer {
        store: &store,
        decay: None,
        uniform: None,
        similarity: &ExactMatch,
        metric: Default::default(),
    };
    for m in [Method::Level1, Method::UniformExp] {
        let q = Query::new(Some("patient-a"), "treatment", 300.0, m);
        assert!(matches!(scorer.rank(&q), Err(Error::Config(_))));
    }
}

#[test]
fn fitted_model_ranking_ignores_future_edges() {
    let f = common::small();
    let uniform = UniformParams::from_records(&f.run.records).unwrap();
    let subject = f.store.subjects().next().unwrap().clone();
    let t_q = f.truth.window.1 * 0.5;
    let pred = f.store.edge(f.store.subject_indices(&subject)[0]).predicate.clone();
    let past: Vec<_> = f.store.edges().iter().filter(|e| e.t.0 <= t_q).cloned().collect();
    let truncated = EdgeStore::from_edges(past).unwrap();
    for method in Method::ALL {
        let q = Query::new(Some(&subject), &pred, t_q, method);
        let run = |store: &EdgeStore| {
            Scorer {
                store,
                decay: Some(&f.run.model),
                uniform: Some(uniform),
                similarity: &ExactMatch,
                metric: Default::default(),
            }
            .rank(&q)
            .unwrap()
        };
        assert_eq!(run(&f.store), run(&truncated), "{method:?}");
    }
}

fn arb_history() -> impl Strategy<Value = Vec<(f64, f64, u8)>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..1.0, 0u8..3), 1..25)
}

fn store_from(h: &[(f64, f64, u8)]) -> EdgeStore {
    let preds = ["a", "b", "c"];
    let edges = h
        .iter()
        .enumerate()
        .map(|(i, &(t, x, p))| common::edge(i as u64, "s", preds[p as usize], &format!("v{i}"), t, vec![x]))
        .collect();
    EdgeStore::from_edges(edges).unwrap()
}

fn decay() -> FixedDecay {
    FixedDecay {
        by_predicate: [("a".to_string(), (5.0, 0.7)), ("b".to_string(), (50.0, 1.3))].into_iter().collect(),
        default: (20.0, 1.0),
    }
}

proptest! {
    #[test]
    fn score_never_rises_with_age(h in arb_history(), t_q in 100.0f64..300.0, mi in 1usize..6) {
        let store = store_from(&h);
        let sim = SimilarityTable { by_edge: Default::default(), default: 0.6 };
        let method = Method::ALL[mi];
        let r = rank_with(&store, &sim, t_q, method);
        for p in ["a", "b", "c"] {
            let mut items: Vec<_> = r.items.iter().filter(|s| store.edges()[s.edge_id as usize].predicate == p).collect();
            items.sort_by(|x, y| x.age_days.total_cmp(&y.age_days));
            for w in items.windows(2) {
                prop_assert!(w[1].score <= w[0].score + 1e-15);
            }
        }
    }

    #[test]
    fn future_edges_do_not_change_the_ranking(h in arb_history(), extra in arb_history(), t_q in 0.0f64..100.0, mi in 0usize..6) {
        let past: Vec<_> = h.iter().copied().filter(|e| e.0 <= t_q).collect();
        prop_assume!(!past.is_empty());
        let mut all = past.clone();
        all.extend(extra.iter().map(|&(t, x, p)| (t_q + 1.0 + t, x, p)));
        let sim = SimilarityTable { by_edge: Default::default(), default: 0.9 };
        let a = rank_with(&store_from(&past), &sim, t_q, Method::ALL[mi]);
        let b = rank_with(&store_from(&all), &sim, t_q, Method::ALL[mi]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scaling_similarity_keeps_the_order(h in arb_history(), sims in prop::collection::vec(0.01f64..1.0, 25), c in 0.05f64..0.99, mi in 0usize..6) {
        let store = store_from(&h);
        let table = |scale: f64| SimilarityTable {
            by_edge: (0..h.len() as u64).map(|i| (i, sims[i as usize] * scale)).collect(),
            default: 0.0,
        };
        let a = rank_with(&store, &table(1.0), 150.0, Method::ALL[mi]);
        let b = rank_with(&store, &table(c), 150.0, Method::ALL[mi]);
        prop_assert_eq!(a.ids(), b.ids());
    }
}

fn rank_with(store: &EdgeStore, sim: &SimilarityTable, t_q: f64, method: Method) -> RankedResult {
    let d = decay();
    Scorer {
        store,
        decay: Some(&d),
        uniform: Some(UniformParams { tau: 10.0, halflife: 7.0 }),
        similarity: sim,
        metric: Default::default(),
    }
    .rank(&Query::new(Some("s"), "a", t_q, method))
    .unwrap()
}

mod common;

use shelflife::hierarchy::{
    assign_predicates, fit_hierarchy, resolve_params, HierarchyModel, HierarchyOptions, Level, NodeRef, NodeStatus,
};
use shelflife::signals::LifetimeRecord;
use shelflife::survival::{fit_aft, AftObs, KappaMode, Standardizer, SurfaceOptions};

fn with_lambda(lambda: f64) -> HierarchyModel {
    let f = common::small();
    let opts = HierarchyOptions { lambda_context: lambda, lambda_entity: lambda, ..HierarchyOptions::default() };
    let model = &f.run.clusters.model;
    let assignment = assign_predicates(model, &f.run.clusters.signals, f.store.window_length()).unwrap();
    fit_hierarchy(&f.store, &f.run.records, model, &assignment, &opts).unwrap()
}

fn dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn context_records<'a>(k: i64, ctx: &Option<String>) -> Vec<&'a LifetimeRecord> {
    common::small()
        .run
        .records
        .iter()
        .filter(|r| r.cluster == Some(k) && &r.context == ctx)
        .collect()
}

/// Weibull AFT log-likelihood written out independently of the fitter.
fn aft_loglik(records: &[&LifetimeRecord], tr: &Standardizer, theta: &[f64; 4], kappa: f64) -> f64 {
    let z = |x: f64, m: f64, s: f64| if s > 0.0 { (x - m) / s } else { 0.0 };
    records
        .iter()
        .map(|r| {
            let zv = z(r.velocity, tr.mean_v, tr.sd_v);
            let zs = z(r.volatility, tr.mean_sigma, tr.sd_sigma);
            let log_tau = theta[0] + theta[1] * zv + theta[2] * zs + theta[3] * zv * zs;
            let t = r.duration.max(1e-3);
            let u = (t.ln() - log_tau) * kappa;
            let log_h = kappa.ln() - t.ln() + u;
            (if r.event.is_event() { log_h } else { 0.0 }) - u.exp()
        })
        .sum()
}

#[test]
fn infinite_penalty_pins_children_to_parent() {
    let m = with_lambda(1e9);
    let mut n = 0;
    for ((k, _), node) in &m.contexts {
        if node.status == NodeStatus::Fitted {
            assert!(dist(&node.theta, &m.clusters[k].theta) < 1e-4);
            n += 1;
        }
    }
    assert!(n >= 8);
    for ((k, c, _), node) in &m.entities {
        if node.status == NodeStatus::Fitted {
            assert!(dist(&node.theta, &m.contexts[&(*k, c.clone())].theta) < 1e-4);
        }
    }
}

#[test]
fn zero_penalty_matches_unpenalized_fit() {
    let m = with_lambda(0.0);
    for ((k, c), node) in m.contexts.iter().filter(|(_, n)| n.status == NodeStatus::Fitted) {
        let recs = context_records(*k, c);
        let obs: Vec<AftObs> = recs.iter().map(|r| AftObs::from(*r)).collect();
        let parent = &m.clusters[k];
        let tr = m.transforms[k];
        let oracle = fit_aft(
            &obs,
            &tr,
            [0.0; 4],
            parent.kappa,
            KappaMode::Fixed(parent.kappa),
            None,
            false,
            &SurfaceOptions::default(),
        );
        let got = aft_loglik(&recs, &tr, &node.theta, node.kappa);
        let want = aft_loglik(&recs, &tr, &oracle.theta, parent.kappa);
        assert!((got - want).abs() <= 1e-5 * want.abs().max(1.0), "{k} {c:?}: {got} vs {want}");
    }
}

#[test]
fn shrinkage_is_monotone_in_lambda() {
    let models: Vec<HierarchyModel> = [0.0, 0.1, 1.0, 10.0, 100.0].into_iter().map(with_lambda).collect();
    for (key, _) in models[0].contexts.iter().filter(|(_, n)| n.status == NodeStatus::Fitted) {
        let d: Vec<f64> = models.iter().map(|m| dist(&m.contexts[key].theta, &m.clusters[&key.0].theta)).collect();
        for w in d.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{key:?}: {d:?}");
        }
    }
}

#[test]
fn unpenalized_child_never_fits_worse_than_parent() {
    let m = with_lambda(0.0);
    for ((k, c), node) in m.contexts.iter().filter(|(_, n)| n.status == NodeStatus::Fitted) {
        let recs = context_records(*k, c);
        let tr = m.transforms[k];
        let parent = &m.clusters[k];
        let child = aft_loglik(&recs, &tr, &node.theta, node.kappa);
        let inherited = aft_loglik(&recs, &tr, &parent.theta, parent.kappa);
        assert!(child >= inherited - 1e-6, "{k} {c:?}: {child} < {inherited}");
    }
}

#[test]
fn structure_and_floors() {
    let m = &common::small().run.model;
    assert!(m.clusters.len() >= 2);
    for ((k, c), node) in &m.contexts {
        assert_eq!(node.level, Level::Context);
        assert_eq!(node.parent, Some(NodeRef::Cluster(*k)));
        assert_eq!(node.kappa, m.clusters[k].kappa, "κ is shared below the cluster by default");
        assert!(node.tau_floor > 0.0, "{k} {c:?}");
    }
    for ((k, c, _), node) in &m.entities {
        assert!(node.n_records >= 10);
        let parent = &m.contexts[&(*k, c.clone())];
        assert_eq!(node.tau_floor, parent.tau_floor);
        assert_eq!(node.kappa, parent.kappa);
    }
}

#[test]
fn per_context_kappa_mode_moves_kappa() {
    let f = common::small();
    let opts = HierarchyOptions { per_context_kappa: true, ..HierarchyOptions::default() };
    let model = &f.run.clusters.model;
    let assignment = assign_predicates(model, &f.run.clusters.signals, f.store.window_length()).unwrap();
    let m = fit_hierarchy(&f.store, &f.run.records, model, &assignment, &opts).unwrap();
    let moved = m.contexts.iter().filter(|((k, _), n)| (n.kappa - m.clusters[k].kappa).abs() > 1e-6).count();
    assert!(moved > 0);
}

#[test]
fn snapshot_round_trip_and_resolution() {
    let m = &common::small().run.model;
    let back = HierarchyModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(&back, m);

    let ((k, c, e), _) = m.entities.iter().next().expect("some entity fits");
    let pred = m.assignment.iter().find(|(_, &kk)| kk == *k).unwrap().0;
    let r = resolve_params(m, pred, c.as_deref(), Some(e), None);
    assert_eq!((r.level, r.cluster, r.cold_start), (Level::Entity, *k, false));
    let r = resolve_params(m, pred, c.as_deref(), Some("nobody"), None);
    assert_eq!(r.level, Level::Context);
    let r = resolve_params(m, pred, Some("no-such-context"), Some(e), None);
    assert_eq!(r.level, Level::Cluster);
    let r = m.resolve_at(pred, c.as_deref(), Some(e), Level::Cluster, None);
    assert_eq!(r.level, Level::Cluster);
    assert!(resolve_params(m, "never-seen", None, None, None).cold_start);
}

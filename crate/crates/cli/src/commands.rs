//! One function per subcommand.

use std::collections::BTreeMap;

use serde_json::json;
use shelflife::clustering::{ari_nmi, write_cluster_csv};
use shelflife::eval::{generate_queries, run_benchmark, threshold_sweep, write_survival_tsv, BenchmarkReport, SweepRow};
use shelflife::hierarchy::HierarchyModel;
use shelflife::pipeline::{self, ClusterStage, PipelineConfig};
use shelflife::report::{fit_report, render_text, Extras, FitReport};
use shelflife::retrieval::{ExactMatch, Method, Query, Scorer, UniformParams};
use shelflife::signals::{write_records_csv, EventKind, LifetimeRecord};
use shelflife::survival::FitOptions;
use shelflife::synthgen;

use crate::artifacts::{self as art, out_path};
use crate::Failure;

fn csv_to(cfg: &PipelineConfig, name: &str) -> Result<art::Writer, Failure> {
    art::create(&out_path(cfg, name))
}

pub fn generate(cfg: &PipelineConfig) -> Result<(), Failure> {
    let (store, truth) = synthgen::generate(&cfg.generator)?;
    let edges = &cfg.paths.edges;
    if let Some(dir) = edges.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    store.write_jsonl(edges)?;
    art::write_json(&cfg.paths.truth, &truth)?;
    let manifest = edges.with_file_name("generate.json");
    art::write_json(
        &manifest,
        &json!({
            "config": cfg,
            "data": {"n_edges": store.len(), "window": truth.window, "n_predicates": truth.predicate_cluster.len()},
        }),
    )?;
    println!(
        "wrote {} edges over {} predicates to {}",
        store.len(),
        truth.predicate_cluster.len(),
        edges.display()
    );
    Ok(())
}

fn write_records(cfg: &PipelineConfig, records: &[LifetimeRecord]) -> Result<(), Failure> {
    write_records_csv(records, csv_to(cfg, art::LIFETIMES_CSV)?)?;
    art::save(cfg, art::LIFETIMES, &records)
}

pub fn extract(cfg: &PipelineConfig) -> Result<(), Failure> {
    let store = art::store(cfg)?;
    let records = pipeline::extract(&store, cfg)?;
    write_records(cfg, &records)?;
    let count = |k: EventKind| records.iter().filter(|r| r.event == k).count();
    println!(
        "{} lifetime records: {} superseded, {} reinforcement, {} censored",
        records.len(),
        count(EventKind::Superseded),
        count(EventKind::Reinforcement),
        count(EventKind::Censored)
    );
    Ok(())
}

fn embeddings(cfg: &PipelineConfig) -> Result<Option<BTreeMap<String, Vec<f64>>>, Failure> {
    let Some(p) = &cfg.paths.predicate_embeddings else {
        return Ok(None);
    };
    let s = std::fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&s)
        .map(Some)
        .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
}

fn agreement(cfg: &PipelineConfig, stage: &ClusterStage) -> Result<Option<(f64, f64)>, Failure> {
    let names = stage.predicates();
    Ok(art::truth(cfg)?.map(|t| ari_nmi(&stage.model.label_vector(&names), &t.labels_for(&names))))
}

pub fn cluster(cfg: &PipelineConfig) -> Result<(), Failure> {
    let store = art::store(cfg)?;
    let records: Vec<LifetimeRecord> = art::load(cfg, art::LIFETIMES, "extract")?;
    let stage = pipeline::cluster(&store, &records, cfg, embeddings(cfg)?.as_ref())?;
    write_cluster_csv(&stage.model, &stage.profiles, csv_to(cfg, art::CLUSTERS_CSV)?)?;
    art::save(cfg, art::CLUSTERS, &stage)?;
    println!(
        "{} clusters over {} predicates ({} skipped)",
        stage.model.n_clusters(),
        stage.profiles.len(),
        stage.skipped.len()
    );
    if let Some((ari, nmi)) = agreement(cfg, &stage)? {
        println!("agreement with planted labels: ARI {ari:.3}  NMI {nmi:.3}");
    }
    for w in &stage.model.warnings {
        eprintln!("warning: {w}");
    }
    if !stage.model.converged {
        return Err(Failure::NonConvergence("clustering did not converge; artifacts written".into()));
    }
    Ok(())
}

pub fn fit(cfg: &PipelineConfig) -> Result<(), Failure> {
    let store = art::store(cfg)?;
    let mut records: Vec<LifetimeRecord> = art::load(cfg, art::LIFETIMES, "extract")?;
    let stage: ClusterStage = art::load(cfg, art::CLUSTERS, "cluster")?;
    let model = pipeline::fit(&store, &mut records, &stage, cfg)?;
    write_records(cfg, &records)?;
    art::save(cfg, art::MODEL, &model)?;
    let fits = fit_report(
        &records,
        &FitOptions { min_duration: cfg.signals.min_duration, ..FitOptions::default() },
    );
    art::save(cfg, art::FIT_REPORT, &fits)?;
    write_survival_tsv(&model, 200, csv_to(cfg, art::SURVIVAL)?)?;
    println!(
        "fitted {} clusters, {} contexts, {} entities",
        model.clusters.len(),
        model.contexts.len(),
        model.entities.len()
    );
    for (&k, n) in &model.clusters {
        println!(
            "  cluster {k}: τ_eff {:.2} d, κ {:.3} ({:?})",
            model.cluster_tau_at_mean(k).unwrap_or(f64::NAN),
            n.kappa,
            n.status
        );
    }
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    let unconverged = model
        .clusters
        .values()
        .chain(model.contexts.values())
        .chain(model.entities.values())
        .filter(|n| !n.converged)
        .count();
    if unconverged > 0 {
        return Err(Failure::NonConvergence(format!("{unconverged} node fits did not converge; artifacts written")));
    }
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig) -> Result<(), Failure> {
    let store = art::store(cfg)?;
    let records: Vec<LifetimeRecord> = art::load(cfg, art::LIFETIMES, "extract")?;
    let model: HierarchyModel = art::load(cfg, art::MODEL, "fit")?;
    let queries = generate_queries(&store, &cfg.thresholds(), cfg.signals.metric, cfg.eval.n_queries, cfg.eval.seed)?;
    let scorer = Scorer {
        store: &store,
        decay: Some(&model),
        uniform: Some(UniformParams::from_records(&records)?),
        similarity: &ExactMatch,
        metric: cfg.signals.metric,
    };
    let mut report = run_benchmark(&scorer, &queries, &cfg.eval.methods, cfg.retrieval.alpha, cfg.retrieval.beta)?;
    report.config = serde_json::to_value(cfg).map_err(|e| Failure::Data(e.to_string()))?;
    report.write_csv(csv_to(cfg, art::BENCHMARK_CSV)?)?;
    art::save(cfg, art::BENCHMARK, &report)?;
    println!("{:<18} {:>8} {:>8} {:>8} {:>8} {:>8}", "method", "NDCG@5", "NDCG@10", "MRR", "P@5", "P@10");
    for r in &report.rows {
        println!(
            "{:<18} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            r.method.as_str(),
            r.ndcg5,
            r.ndcg10,
            r.mrr,
            r.p5,
            r.p10
        );
    }
    if report.n_flagged > 0 {
        eprintln!("warning: {} queries had no relevant edge", report.n_flagged);
    }
    Ok(())
}

pub fn query(
    cfg: &PipelineConfig,
    subject: Option<&str>,
    predicate: &str,
    at: f64,
    method: Method,
    top: usize,
) -> Result<(), Failure> {
    if !at.is_finite() {
        return Err(Failure::Config(format!("--at must be finite, got {at}")));
    }
    let store = art::store(cfg)?;
    let model: Option<HierarchyModel> = match method.max_level() {
        Some(_) => Some(art::load(cfg, art::MODEL, "fit")?),
        None => None,
    };
    let uniform = match method {
        Method::UniformExp | Method::UniformHalflife => {
            let records: Vec<LifetimeRecord> = art::load(cfg, art::LIFETIMES, "extract")?;
            Some(UniformParams::from_records(&records)?)
        }
        _ => None,
    };
    let scorer = Scorer {
        store: &store,
        decay: model.as_ref().map(|m| m as &dyn shelflife::retrieval::DecaySource),
        uniform,
        similarity: &ExactMatch,
        metric: cfg.signals.metric,
    };
    let mut q = Query::new(subject, predicate, at, method);
    q.alpha = cfg.retrieval.alpha;
    q.beta = cfg.retrieval.beta;
    let ranked = scorer.rank(&q)?;
    let by_id: BTreeMap<u64, usize> = store.edges().iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    let results: Vec<_> = ranked
        .items
        .iter()
        .take(top)
        .map(|s| {
            let e = store.edge(by_id[&s.edge_id]);
            json!({
                "edge_id": s.edge_id,
                "subject": e.subject,
                "predicate": e.predicate,
                "value": e.value.raw,
                "context": e.context,
                "t": s.t,
                "score": s.score,
                "sim": s.sim,
                "freshness": s.freshness,
                "age_days": s.age_days,
                "tau_eff": s.tau_eff,
                "kappa": s.kappa,
                "level": s.level,
            })
        })
        .collect();
    let out = json!({
        "config": cfg,
        "query": {"subject": subject, "predicate": predicate, "t_q": at, "method": method},
        "n_candidates": ranked.items.len(),
        "results": results,
    });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Failure::Data(e.to_string()))?);
    Ok(())
}

pub fn report(cfg: &PipelineConfig) -> Result<(), Failure> {
    let stage: ClusterStage = art::load(cfg, art::CLUSTERS, "cluster")?;
    let model: HierarchyModel = art::load(cfg, art::MODEL, "fit")?;
    let fits: FitReport = art::load(cfg, art::FIT_REPORT, "fit")?;
    let benchmark: Option<BenchmarkReport> = art::load_optional(cfg, art::BENCHMARK)?;
    let sweep: Option<Vec<SweepRow>> = art::load_optional(cfg, art::SWEEP)?;
    let extras = Extras {
        benchmark: benchmark.as_ref(),
        sweep: sweep.as_deref(),
        agreement: agreement(cfg, &stage)?,
    };
    let text = render_text(&stage, &model, &fits, &extras);
    art::write_text(&out_path(cfg, art::REPORT), &text)?;
    print!("{text}");
    Ok(())
}

pub fn sweep(cfg: &PipelineConfig) -> Result<(), Failure> {
    let store = art::store(cfg)?;
    let truth = art::truth(cfg)?;
    let reference = truth.as_ref().map(|t| move |names: &[String]| t.labels_for(names));
    let rows = threshold_sweep(
        &store,
        cfg,
        &cfg.eval.sweep_epsilons,
        reference.as_ref().map(|f| f as &dyn Fn(&[String]) -> Vec<i64>),
    )?;
    let mut w = csv::Writer::from_writer(csv_to(cfg, art::SWEEP_CSV)?);
    w.write_record(["epsilon", "n_superseded", "n_reinforcement", "n_clusters", "ari", "nmi", "kappa_by_tau"])
        .map_err(|e| Failure::Data(e.to_string()))?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    for r in &rows {
        let kappas: Vec<String> = r.clusters_by_tau.iter().map(|(_, k)| format!("{k:.4}")).collect();
        w.write_record([
            r.epsilon.to_string(),
            r.n_superseded.to_string(),
            r.n_reinforcement.to_string(),
            r.n_clusters.to_string(),
            opt(r.ari),
            opt(r.nmi),
            kappas.join(";"),
        ])
        .map_err(|e| Failure::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))?;
    art::save(cfg, art::SWEEP, &rows)?;
    println!("{:>6} {:>10} {:>10} {:>9} {:>6}", "ε", "superseded", "reinforced", "clusters", "ARI");
    for r in &rows {
        println!(
            "{:>6.2} {:>10} {:>10} {:>9} {:>6}",
            r.epsilon,
            r.n_superseded,
            r.n_reinforcement,
            r.n_clusters,
            r.ari.map_or("-".into(), |a| format!("{a:.3}"))
        );
    }
    Ok(())
}

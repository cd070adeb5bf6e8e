//! Per-group parametric fits and the consolidated text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{BenchmarkReport, SweepRow};
use crate::hierarchy::HierarchyModel;
use crate::pipeline::ClusterStage;
use crate::signals::LifetimeRecord;
use crate::survival::{compare_aic, lognormal_hazard_peak, median, Family, FitOptions, HazardPeak, Obs, ParamFit, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFits {
    pub cluster: i64,
    /// `None` for the cluster-wide group.
    pub context: Option<String>,
    pub n_records: usize,
    /// Successful fits, ascending AIC.
    pub fits: Vec<ParamFit>,
    pub failures: Vec<(Family, String)>,
    /// Log-normal hazard peak; "decreasing" is checked at the median event
    /// duration.
    pub lognormal_peak: Option<HazardPeak>,
}

impl GroupFits {
    pub fn best(&self) -> Option<Family> {
        self.fits.first().map(ParamFit::family)
    }

    pub fn fit(&self, family: Family) -> Option<&ParamFit> {
        self.fits.iter().find(|f| f.family() == family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub clusters: Vec<GroupFits>,
    pub contexts: Vec<GroupFits>,
}

impl FitReport {
    pub fn cluster(&self, k: i64) -> Option<&GroupFits> {
        self.clusters.iter().find(|g| g.cluster == k)
    }
}

fn group_fits(cluster: i64, context: Option<String>, recs: &[&LifetimeRecord], opts: &FitOptions) -> GroupFits {
    let obs: Vec<Obs> = recs.iter().map(|r| Obs::from(*r)).collect();
    let (fits, failures) = compare_aic(&obs, &Family::ALL, opts);
    let mut events: Vec<f64> = obs.iter().filter(|o| o.event).map(|o| o.duration).collect();
    let reference = median(&mut events);
    let lognormal_peak = fits.iter().find_map(|f| match f.params {
        Params::Lognormal { mu, s } => lognormal_hazard_peak(mu, s, reference).ok(),
        _ => None,
    });
    GroupFits {
        cluster,
        context,
        n_records: obs.len(),
        fits,
        failures: failures.into_iter().map(|(f, e)| (f, e.to_string())).collect(),
        lognormal_peak,
    }
}

/// Exponential, Weibull and log-normal fits per cluster and per
/// `(cluster, context)`. Records without a cluster are skipped.
pub fn fit_report(records: &[LifetimeRecord], opts: &FitOptions) -> FitReport {
    let mut by_cluster: BTreeMap<i64, Vec<&LifetimeRecord>> = BTreeMap::new();
    let mut by_context: BTreeMap<(i64, Option<String>), Vec<&LifetimeRecord>> = BTreeMap::new();
    for r in records {
        if let Some(k) = r.cluster {
            by_cluster.entry(k).or_default().push(r);
            by_context.entry((k, r.context.clone())).or_default().push(r);
        }
    }
    FitReport {
        clusters: by_cluster.par_iter().map(|(&k, rs)| group_fits(k, None, rs, opts)).collect(),
        contexts: by_context
            .par_iter()
            .map(|((k, c), rs)| group_fits(*k, c.clone(), rs, opts))
            .collect(),
    }
}

fn fmt_params(p: &Params) -> String {
    match *p {
        Params::Exponential { tau } => format!("τ={tau:.4}"),
        Params::Weibull { tau, kappa } => format!("τ={tau:.4} κ={kappa:.3}"),
        Params::Lognormal { mu, s } => format!("μ={mu:.3} s={s:.3}"),
    }
}

/// Optional sections of [`render_text`].
#[derive(Default)]
pub struct Extras<'a> {
    pub benchmark: Option<&'a BenchmarkReport>,
    pub sweep: Option<&'a [SweepRow]>,
    /// ARI and NMI against reference labels.
    pub agreement: Option<(f64, f64)>,
}

/// Plain-text tables: clusters, decay parameters, AIC comparison, context
/// fits, and any benchmark or sweep results supplied.
pub fn render_text(stage: &ClusterStage, model: &HierarchyModel, fits: &FitReport, extras: &Extras<'_>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "CLUSTERS ({:?}, {} found)", stage.model.method, stage.model.n_clusters());
    if let Some((ari, nmi)) = extras.agreement {
        let _ = writeln!(s, "agreement with reference labels: ARI {ari:.3}  NMI {nmi:.3}");
    }
    let _ = writeln!(
        s,
        "{:>7} {:>5} {:>9} {:>9} {:>10} {:>6} {:>8}  members",
        "cluster", "size", "velocity", "volatil.", "mean T̄", "rho", "sup_rate"
    );
    let mut groups: BTreeMap<i64, Vec<&str>> = BTreeMap::new();
    for (p, &k) in &stage.model.labels {
        groups.entry(k).or_default().push(p);
    }
    for (k, members) in &groups {
        let sig: Vec<_> = members.iter().filter_map(|p| stage.signals.get(*p)).collect();
        let n = sig.len().max(1) as f64;
        let mean = |f: &dyn Fn(&crate::signals::PredicateSignals) -> f64| sig.iter().map(|x| f(x)).sum::<f64>() / n;
        let tbar: Vec<f64> = sig.iter().filter_map(|x| x.mean_lifetime).collect();
        let tbar = if tbar.is_empty() { f64::NAN } else { tbar.iter().sum::<f64>() / tbar.len() as f64 };
        let _ = writeln!(
            s,
            "{:>7} {:>5} {:>9.4} {:>9.4} {:>10.1} {:>6.3} {:>8.3}  {}",
            k,
            members.len(),
            mean(&|x| x.velocity),
            mean(&|x| x.volatility),
            tbar,
            mean(&|x| x.rho),
            mean(&|x| x.sup_rate),
            members.join(", ")
        );
    }

    let _ = writeln!(s, "\nDECAY PARAMETERS (level 1, τ_eff at cluster-mean covariates)");
    let _ = writeln!(s, "{:>7} {:>12} {:>7} {:>9} {:>9} {:>9}  status", "cluster", "τ_eff", "κ", "floor", "events", "censored");
    for (&k, n) in &model.clusters {
        let _ = writeln!(
            s,
            "{:>7} {:>12.2} {:>7.3} {:>9.2} {:>9} {:>9}  {:?}",
            k,
            model.cluster_tau_at_mean(k).unwrap_or(f64::NAN),
            n.kappa,
            n.tau_floor,
            n.n_events,
            n.n_records - n.n_events,
            n.status
        );
    }

    let _ = writeln!(s, "\nDISTRIBUTION COMPARISON (AIC, lower is better)");
    let _ = writeln!(
        s,
        "{:>7} {:>14} {:>14} {:>14}  {:<12} {:>12}",
        "cluster", "exponential", "weibull", "lognormal", "best", "LN peak (d)"
    );
    for g in &fits.clusters {
        let aic = |f: Family| g.fit(f).map_or("-".to_string(), |x| format!("{:.1}", x.aic));
        let _ = writeln!(
            s,
            "{:>7} {:>14} {:>14} {:>14}  {:<12} {:>12}",
            g.cluster,
            aic(Family::Exponential),
            aic(Family::Weibull),
            aic(Family::Lognormal),
            g.best().map_or("-", Family::as_str),
            g.lognormal_peak.map_or("-".to_string(), |p| format!("{:.4}", p.t_peak))
        );
    }
    for g in &fits.clusters {
        for f in &g.fits {
            let _ = writeln!(s, "  cluster {} {:<12} {}", g.cluster, f.family().as_str(), fmt_params(&f.params));
        }
    }

    let _ = writeln!(s, "\nCONTEXT FITS (level 2, τ_eff at the context's mean covariates)");
    let _ = writeln!(s, "{:>7} {:<24} {:>12} {:>7} {:>9}  status", "cluster", "context", "τ_eff", "κ", "records");
    for ((k, c), n) in &model.contexts {
        let _ = writeln!(
            s,
            "{:>7} {:<24} {:>12.2} {:>7.3} {:>9}  {:?}",
            k,
            c.as_deref().unwrap_or("-"),
            HierarchyModel::tau_at_own_mean(n),
            n.kappa,
            n.n_records,
            n.status
        );
    }
    let fitted = model.entities.values().filter(|n| n.status == crate::hierarchy::NodeStatus::Fitted);
    let taus: Vec<f64> = fitted.map(HierarchyModel::tau_at_own_mean).collect();
    if !taus.is_empty() {
        let lo = taus.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = taus.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(s, "entity fits: {} (τ_eff from {lo:.1} to {hi:.1} days)", taus.len());
    }

    if let Some(b) = extras.benchmark {
        let _ = writeln!(s, "\nRETRIEVAL ({} queries, seed {})", b.n_queries, b.query_seed);
        let _ = writeln!(s, "{:<18} {:>8} {:>8} {:>8} {:>8} {:>8}", "method", "NDCG@5", "NDCG@10", "MRR", "P@5", "P@10");
        for r in &b.rows {
            let _ = writeln!(
                s,
                "{:<18} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                r.method.as_str(),
                r.ndcg5,
                r.ndcg10,
                r.mrr,
                r.p5,
                r.p10
            );
        }
    }

    if let Some(rows) = extras.sweep {
        let _ = writeln!(s, "\nTHRESHOLD SWEEP");
        let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>9} {:>6}  κ by cluster (shortest τ first)", "ε", "superseded", "reinforced", "clusters", "ARI");
        for r in rows {
            let kappas: Vec<String> = r.clusters_by_tau.iter().map(|(_, k)| format!("{k:.3}")).collect();
            let _ = writeln!(
                s,
                "{:>6.2} {:>10} {:>10} {:>9} {:>6}  {}",
                r.epsilon,
                r.n_superseded,
                r.n_reinforcement,
                r.n_clusters,
                r.ari.map_or("-".to_string(), |a| format!("{a:.3}")),
                kappas.join(" ")
            );
        }
    }

    if !model.warnings.is_empty() || !stage.model.warnings.is_empty() {
        let _ = writeln!(s, "\nWARNINGS");
        for w in stage.model.warnings.iter().chain(&model.warnings) {
            let _ = writeln!(s, "  {w}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::EventKind;

    fn rec(id: u64, cluster: Option<i64>, ctx: &str, duration: f64, event: EventKind) -> LifetimeRecord {
        LifetimeRecord {
            edge_id: id,
            duration,
            event,
            superseded_by: None,
            velocity: 0.1,
            volatility: 0.2,
            subject: "s".into(),
            predicate: "p".into(),
            context: Some(ctx.into()),
            entity: "s".into(),
            cluster,
        }
    }

    #[test]
    fn groups_by_cluster_and_context() {
        let mut records = Vec::new();
        for i in 0..40u64 {
            let d = 1.0 + (i % 7) as f64 * 3.0 + i as f64 * 0.1;
            let ev = if i % 4 == 0 { EventKind::Reinforcement } else { EventKind::Superseded };
            records.push(rec(i, Some((i % 2) as i64), if i % 3 == 0 { "a" } else { "b" }, d, ev));
        }
        records.push(rec(99, None, "a", 5.0, EventKind::Superseded));
        let r = fit_report(&records, &FitOptions::default());
        assert_eq!(r.clusters.iter().map(|g| g.cluster).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(r.clusters.iter().map(|g| g.n_records).sum::<usize>(), 40);
        assert_eq!(r.contexts.len(), 4);
        for g in &r.clusters {
            assert_eq!(g.fits.len(), 3);
            assert!(g.fits.windows(2).all(|w| w[0].aic <= w[1].aic));
            assert_eq!(g.best(), Some(g.fits[0].family()));
            assert!(g.lognormal_peak.is_some());
        }
    }
}

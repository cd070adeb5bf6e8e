//! Six-condition retrieval benchmark and its reports.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::metrics;
use super::queries::QuerySet;
use crate::error::Result;
use crate::hierarchy::{HierarchyModel, Level};
use crate::retrieval::{Method, Query, Scorer};
use crate::survival::weibull_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub mrr: f64,
    pub p5: f64,
    pub p10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<MethodRow>,
    pub n_queries: usize,
    /// Queries with an empty relevant set; they score zero on every metric.
    pub n_flagged: usize,
    pub query_seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Configuration echo supplied by the caller.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl BenchmarkReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "ndcg@5", "ndcg@10", "mrr", "p@5", "p@10"])?;
        for r in &self.rows {
            out.write_record([
                r.method.as_str().to_string(),
                format!("{:.6}", r.ndcg5),
                format!("{:.6}", r.ndcg10),
                format!("{:.6}", r.mrr),
                format!("{:.6}", r.p5),
                format!("{:.6}", r.p10),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Ranks every query's subject pool under each method and averages the
/// metrics.
pub fn run_benchmark(
    scorer: &Scorer<'_>,
    queries: &QuerySet,
    methods: &[Method],
    alpha: f64,
    beta: f64,
) -> Result<BenchmarkReport> {
    let n = queries.queries.len().max(1) as f64;
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let per_query: Result<Vec<[f64; 5]>> = queries
            .queries
            .par_iter()
            .map(|tq| {
                let q = Query {
                    subject: Some(tq.subject.clone()),
                    predicate: tq.predicate.clone(),
                    t_q: tq.t_q,
                    alpha,
                    beta,
                    method,
                    embedding: None,
                };
                let ids = scorer.rank(&q)?.ids();
                let m5 = metrics(&ids, &tq.relevant, 5);
                let m10 = metrics(&ids, &tq.relevant, 10);
                Ok([m5.ndcg, m10.ndcg, m5.rr, m5.precision, m10.precision])
            })
            .collect();
        let mut sum = [0.0; 5];
        for r in per_query? {
            for (s, x) in sum.iter_mut().zip(r) {
                *s += x;
            }
        }
        rows.push(MethodRow {
            method,
            ndcg5: sum[0] / n,
            ndcg10: sum[1] / n,
            mrr: sum[2] / n,
            p5: sum[3] / n,
            p10: sum[4] / n,
        });
    }
    Ok(BenchmarkReport {
        rows,
        n_queries: queries.queries.len(),
        n_flagged: queries.queries.iter().filter(|q| q.relevant.is_empty()).count(),
        query_seed: queries.seed,
        alpha,
        beta,
        config: serde_json::Value::Null,
    })
}

/// Level-1 survival curves at each cluster's mean covariates on a log grid,
/// as TSV rows `cluster, t, S(t)`.
pub fn write_survival_tsv<W: Write>(model: &HierarchyModel, points: usize, mut w: W) -> Result<()> {
    writeln!(w, "cluster\tt_days\tsurvival")?;
    let (lo, hi) = (0.1f64.ln(), model.window.max(1.0).ln());
    for (&k, node) in &model.clusters {
        let Some(tau) = model.cluster_tau_at_mean(k) else {
            continue;
        };
        debug_assert_eq!(node.level, Level::Cluster);
        for i in 0..points {
            let t = (lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64).exp();
            writeln!(w, "{k}\t{t:.6}\t{:.8}", weibull_sf(t, tau, node.kappa)?)?;
        }
    }
    Ok(())
}

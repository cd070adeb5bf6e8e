//! Immutable temporal fact store.
//!
//! Edges are `(subject, predicate, value, t)` facts carrying a value embedding.
//! The store is built once from a JSONL file (or from the synthetic generator)
//! and never mutated afterwards. Two indices are kept: per concept
//! (`subject`, `predicate`) sorted by `(t, id)`, and per predicate.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days since the corpus epoch. Sub-day events are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub fn days(self) -> f64 {
        self.0
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Numeric,
    Categorical,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub kind: ValueKind,
    pub raw: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u64,
    pub subject: String,
    pub predicate: String,
    pub value: Value,
    pub t: Timestamp,
    pub context: Option<String>,
    /// Level-3 grouping key; defaults to the subject.
    pub entity: String,
}

/// One line of the JSONL edge format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub subject: String,
    pub predicate: String,
    pub value_kind: ValueKind,
    pub value: String,
    pub embedding: Vec<f64>,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
}

impl From<&Edge> for EdgeRecord {
    fn from(e: &Edge) -> Self {
        EdgeRecord {
            subject: e.subject.clone(),
            predicate: e.predicate.clone(),
            value_kind: e.value.kind,
            value: e.value.raw.clone(),
            embedding: e.value.embedding.clone(),
            t: e.t.0,
            context: e.context.clone(),
            entity: if e.entity == e.subject {
                None
            } else {
                Some(e.entity.clone())
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Cosine,
}

/// Distance between two value embeddings.
pub fn embed_distance(a: &Value, b: &Value, metric: DistanceMetric) -> Result<f64> {
    vector_distance(&a.embedding, &b.embedding, metric)
}

pub fn vector_distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(match metric {
        DistanceMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 && nb == 0.0 {
                0.0
            } else if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
            }
        }
    })
}

pub type ConceptKey = (String, String);

#[derive(Debug, Clone, Default)]
pub struct EdgeStore {
    edges: Vec<Edge>,
    window: Option<(f64, f64)>,
    dim: Option<usize>,
    by_concept: BTreeMap<ConceptKey, Vec<usize>>,
    by_predicate: BTreeMap<String, Vec<usize>>,
    by_subject: BTreeMap<String, Vec<usize>>,
}

impl EdgeStore {
    /// Builds a store from edges in their id order. Ids must be unique.
    pub fn from_edges(edges: Vec<Edge>) -> Result<Self> {
        let mut builder = StoreBuilder::default();
        for e in edges {
            builder.push(e)?;
        }
        Ok(builder.finish())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    /// Observation window `(t_start, t_now)`; `None` for an empty store
    /// without an override.
    pub fn window(&self) -> Option<(f64, f64)> {
        self.window
    }

    pub fn window_end(&self) -> f64 {
        self.window.map(|w| w.1).unwrap_or(0.0)
    }

    pub fn window_length(&self) -> f64 {
        self.window.map(|(a, b)| b - a).unwrap_or(0.0)
    }

    pub fn with_window(mut self, start: f64, end: f64) -> Self {
        self.window = Some((start, end));
        self
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.dim
    }

    /// Edges of one concept ascending by `(t, id)`; empty for unknown concepts.
    pub fn concept_history(&self, subject: &str, predicate: &str) -> Vec<&Edge> {
        self.by_concept
            .get(&(subject.to_string(), predicate.to_string()))
            .map(|ix| ix.iter().map(|&i| &self.edges[i]).collect())
            .unwrap_or_default()
    }

    /// Iterates concepts in sorted key order with their sorted edge indices.
    pub fn concepts(&self) -> impl Iterator<Item = (&ConceptKey, &[usize])> {
        self.by_concept.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn concept_indices(&self, subject: &str, predicate: &str) -> &[usize] {
        self.by_concept
            .get(&(subject.to_string(), predicate.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&String, &[usize])> {
        self.by_predicate.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn subject_indices(&self, subject: &str) -> &[usize] {
        self.by_subject.get(subject).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn subjects(&self) -> impl Iterator<Item = &String> {
        self.by_subject.keys()
    }

    /// Writes the store in JSONL edge format, one edge per line in id order.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.edges {
            serde_json::to_writer(&mut w, &EdgeRecord::from(e))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default)]
struct StoreBuilder {
    edges: Vec<Edge>,
    dim: Option<usize>,
}

impl StoreBuilder {
    fn push(&mut self, edge: Edge) -> Result<()> {
        if !edge.t.0.is_finite() {
            return Err(Error::Parse {
                line: self.edges.len() + 1,
                message: "timestamp is not finite".into(),
            });
        }
        if edge.value.embedding.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: self.edges.len() + 1,
                message: "embedding contains a non-finite component".into(),
            });
        }
        let d = edge.value.embedding.len();
        match self.dim {
            None => self.dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { expected, found: d })
            }
            _ => {}
        }
        self.edges.push(edge);
        Ok(())
    }

    fn finish(self) -> EdgeStore {
        let edges = self.edges;
        let mut by_concept: BTreeMap<ConceptKey, Vec<usize>> = BTreeMap::new();
        let mut by_predicate: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            by_concept
                .entry((e.subject.clone(), e.predicate.clone()))
                .or_default()
                .push(i);
            by_predicate.entry(e.predicate.clone()).or_default().push(i);
            by_subject.entry(e.subject.clone()).or_default().push(i);
        }
        let key = |i: &usize| (edges[*i].t, edges[*i].id);
        for ix in by_concept.values_mut() {
            ix.sort_by_key(key);
        }
        for ix in by_predicate.values_mut() {
            ix.sort_by_key(key);
        }
        for ix in by_subject.values_mut() {
            ix.sort_by_key(key);
        }
        let window = if edges.is_empty() {
            None
        } else {
            let lo = edges.iter().map(|e| e.t.0).fold(f64::INFINITY, f64::min);
            let hi = edges.iter().map(|e| e.t.0).fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        };
        EdgeStore {
            edges,
            window,
            dim: self.dim,
            by_concept,
            by_predicate,
            by_subject,
        }
    }
}

/// Loads a JSONL edge file. Edge ids are the 0-based index of the
/// non-blank line they appear on.
pub fn load_edges(path: &Path) -> Result<EdgeStore> {
    let reader = BufReader::new(File::open(path)?);
    let mut builder = StoreBuilder::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EdgeRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let id = builder.edges.len() as u64;
        let entity = rec.entity.unwrap_or_else(|| rec.subject.clone());
        let edge = Edge {
            id,
            subject: rec.subject,
            predicate: rec.predicate,
            value: Value {
                kind: rec.value_kind,
                raw: rec.value,
                embedding: rec.embedding,
            },
            t: Timestamp(rec.t),
            context: rec.context,
            entity,
        };
        builder.push(edge).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                line: lineno + 1,
                message,
            },
            Error::DimensionMismatch { expected, found } => Error::Parse {
                line: lineno + 1,
                message: format!("embedding dimension {found}, expected {expected}"),
            },
            other => other,
        })?;
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn edge(id: u64, s: &str, p: &str, emb: Vec<f64>, t: f64) -> Edge {
        Edge {
            id,
            subject: s.into(),
            predicate: p.into(),
            value: Value {
                kind: ValueKind::Numeric,
                raw: format!("{emb:?}"),
                embedding: emb,
            },
            t: Timestamp(t),
            context: None,
            entity: s.into(),
        }
    }

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn empty_file_gives_empty_store() {
        let f = write_tmp(&[]);
        let store = load_edges(f.path()).unwrap();
        assert!(store.is_empty());
        assert_eq!(store.window(), None);
    }

    #[test]
    fn concept_index_is_sorted_by_time() {
        let f = write_tmp(&[
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"3","embedding":[3.0],"t":9}"#,
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"1","embedding":[1.0],"t":1}"#,
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"2","embedding":[2.0],"t":4.5}"#,
        ]);
        let store = load_edges(f.path()).unwrap();
        let h = store.concept_history("a", "bp");
        assert_eq!(h.len(), 3);
        let ts: Vec<f64> = h.iter().map(|e| e.t.0).collect();
        assert_eq!(ts, vec![1.0, 4.5, 9.0]);
        assert_eq!(store.window(), Some((1.0, 9.0)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp(&[
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"3","embedding":[3.0],"t":9}"#,
            r#"{"subject":"a","predicate":"bp""#,
        ]);
        match load_edges(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension_is_rejected() {
        let f = write_tmp(&[
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"3","embedding":[3.0],"t":9}"#,
            r#"{"subject":"a","predicate":"bp","value_kind":"numeric","value":"3","embedding":[3.0,1.0],"t":10}"#,
        ]);
        assert!(matches!(load_edges(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn entity_defaults_to_subject() {
        let f = write_tmp(&[
            r#"{"subject":"a","predicate":"bp","value_kind":"text","value":"x","embedding":[0.0],"t":0,"context":"icu"}"#,
            r#"{"subject":"b","predicate":"bp","value_kind":"text","value":"x","embedding":[0.0],"t":0,"entity":"e9"}"#,
        ]);
        let store = load_edges(f.path()).unwrap();
        assert_eq!(store.edge(0).entity, "a");
        assert_eq!(store.edge(0).context.as_deref(), Some("icu"));
        assert_eq!(store.edge(1).entity, "e9");
    }

    #[test]
    fn unknown_concept_is_empty_and_partition_holds() {
        let edges = vec![
            edge(0, "a", "p", vec![0.0], 0.0),
            edge(1, "b", "p", vec![0.0], 1.0),
            edge(2, "a", "q", vec![0.0], 2.0),
            edge(3, "a", "p", vec![1.0], 3.0),
            edge(4, "b", "p", vec![1.0], 0.5),
        ];
        let store = EdgeStore::from_edges(edges).unwrap();
        assert!(store.concept_history("zz", "p").is_empty());
        let total: usize = store.concepts().map(|(_, ix)| ix.len()).sum();
        assert_eq!(total, store.len());
        for ((s, p), ix) in store.concepts() {
            assert!(ix
                .iter()
                .all(|&i| &store.edge(i).subject == s && &store.edge(i).predicate == p));
        }
    }

    #[test]
    fn same_time_ties_break_by_id() {
        let edges = vec![
            edge(0, "a", "p", vec![0.0], 5.0),
            edge(1, "a", "p", vec![1.0], 5.0),
        ];
        let store = EdgeStore::from_edges(edges).unwrap();
        let h = store.concept_history("a", "p");
        assert_eq!(h[0].id, 0);
        assert_eq!(h[1].id, 1);
    }

    #[test]
    fn distance_basics() {
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0];
        let d = vector_distance(&x, &y, DistanceMetric::Euclidean).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(vector_distance(&x, &x, DistanceMetric::Euclidean).unwrap(), 0.0);
        let c = vector_distance(&x, &y, DistanceMetric::Cosine).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        assert!(vector_distance(&x, &[1.0], DistanceMetric::Euclidean).is_err());
    }

    #[test]
    fn distance_matches_scalar_recompute() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for i in 0..8 {
            let d = a[i] - b[i];
            acc += d * d;
        }
        let got = vector_distance(&a, &b, DistanceMetric::Euclidean).unwrap();
        assert!((got - acc.sqrt()).abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn euclidean_is_a_metric(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            c in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let m = DistanceMetric::Euclidean;
            let ab = vector_distance(&a, &b, m).unwrap();
            let ba = vector_distance(&b, &a, m).unwrap();
            let ac = vector_distance(&a, &c, m).unwrap();
            let cb = vector_distance(&c, &b, m).unwrap();
            proptest::prop_assert!((ab - ba).abs() < 1e-12);
            proptest::prop_assert!(ab <= ac + cb + 1e-12);
            proptest::prop_assert_eq!(vector_distance(&a, &a, m).unwrap(), 0.0);
        }
    }
}

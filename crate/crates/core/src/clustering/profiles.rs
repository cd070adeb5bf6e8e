//! Per-predicate temporal feature vectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::PredicateSignals;

pub const N_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["velocity", "volatility", "log_lifetime", "rho", "sup_rate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateProfile {
    pub predicate: String,
    /// `(vel, vol, ln T̄, ρ, sup_rate)` before standardization.
    pub raw: [f64; N_FEATURES],
    /// Z-scored features.
    pub features: [f64; N_FEATURES],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    pub n_records: usize,
}

/// Per-feature z-scoring. Features with zero spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; N_FEATURES],
    pub sd: [f64; N_FEATURES],
}

impl FeatureScaler {
    pub fn fit(rows: &[[f64; N_FEATURES]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; N_FEATURES];
        let mut sd = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            sd[j] = var.sqrt();
            if sd[j] <= 1e-12 * mean[j].abs().max(1.0) {
                sd[j] = 0.0;
            }
        }
        FeatureScaler { mean, sd }
    }

    pub fn transform(&self, raw: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut z = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            z[j] = if self.sd[j] == 0.0 { 0.0 } else { (raw[j] - self.mean[j]) / self.sd[j] };
        }
        z
    }
}

/// Raw feature vector of one predicate; `T̄` falls back to the window length
/// when no supersession was observed.
pub fn raw_features(sig: &PredicateSignals, window: f64) -> [f64; N_FEATURES] {
    let lifetime = sig.mean_lifetime.unwrap_or(window).max(f64::MIN_POSITIVE);
    [sig.velocity, sig.volatility, lifetime.ln(), sig.rho, sig.sup_rate]
}

/// Builds z-scored profiles for predicates with at least `min_obs` records.
pub fn build_profiles(
    signals: &BTreeMap<String, PredicateSignals>,
    window: f64,
    min_obs: usize,
    embeddings: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<(Vec<PredicateProfile>, FeatureScaler)> {
    if min_obs == 0 {
        return Err(Error::Config("min_obs must be at least 1".into()));
    }
    let eligible: Vec<&PredicateSignals> = signals.values().filter(|s| s.n_records() >= min_obs).collect();
    if eligible.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} predicates with at least {min_obs} records; clustering needs 2",
            eligible.len()
        )));
    }
    let raws: Vec<[f64; N_FEATURES]> = eligible.iter().map(|s| raw_features(s, window)).collect();
    let scaler = FeatureScaler::fit(&raws);
    let profiles = eligible
        .iter()
        .zip(&raws)
        .map(|(s, raw)| PredicateProfile {
            predicate: s.predicate.clone(),
            raw: *raw,
            features: scaler.transform(raw),
            embedding: embeddings.and_then(|m| m.get(&s.predicate).cloned()),
            n_records: s.n_records(),
        })
        .collect();
    Ok((profiles, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(p: &str, sup: usize, rein: usize, life: Option<f64>) -> PredicateSignals {
        PredicateSignals {
            predicate: p.into(),
            velocity: 0.5,
            volatility: 0.1,
            mean_lifetime: life,
            rho: if sup + rein == 0 { 0.0 } else { sup as f64 / (sup + rein) as f64 },
            sup_rate: 0.5,
            n_superseded: sup,
            n_reinforcement: rein,
            n_censored: 3,
            n_concepts: 3,
        }
    }

    #[test]
    fn no_supersessions_uses_window() {
        let s = sig("p", 0, 7, None);
        let raw = raw_features(&s, 1825.0);
        assert!((raw[2] - 1825f64.ln()).abs() < 1e-12);
        assert_eq!(raw[3], 0.0);
    }

    #[test]
    fn identical_profiles_are_all_zero() {
        let mut m = BTreeMap::new();
        for p in ["a", "b", "c"] {
            m.insert(p.to_string(), sig(p, 4, 4, Some(10.0)));
        }
        let (profiles, _) = build_profiles(&m, 100.0, 5, None).unwrap();
        assert_eq!(profiles.len(), 3);
        assert!(profiles.iter().all(|p| p.features == [0.0; N_FEATURES]));
    }

    #[test]
    fn min_obs_filters_and_errors() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), sig("a", 4, 4, Some(10.0)));
        m.insert("b".to_string(), sig("b", 0, 0, None));
        assert!(matches!(build_profiles(&m, 100.0, 5, None), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn z_scores_have_unit_spread() {
        let mut m = BTreeMap::new();
        for (i, p) in ["a", "b", "c", "d"].iter().enumerate() {
            let mut s = sig(p, 4, 4, Some(10.0 * (i + 1) as f64));
            s.velocity = i as f64;
            m.insert(p.to_string(), s);
        }
        let (profiles, _) = build_profiles(&m, 100.0, 1, None).unwrap();
        let col: Vec<f64> = profiles.iter().map(|p| p.features[0]).collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
}

//! Censored maximum-likelihood fits of single-family lifetime models.

use serde::{Deserialize, Serialize};

use super::dist::{log_norm_pdf, log_norm_sf, mills, Family, Params};
use crate::error::{Error, Result};
use crate::optim::{maximize, Eval, NewtonOptions};
use crate::signals::LifetimeRecord;

pub const KAPPA_MIN: f64 = 0.05;
pub const KAPPA_MAX: f64 = 20.0;

/// One survival observation: an event (supersession) or a right-censored
/// duration (reinforcement or still-live edge).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obs {
    pub duration: f64,
    pub event: bool,
}

impl Obs {
    pub fn event(duration: f64) -> Self {
        Obs { duration, event: true }
    }

    pub fn censored(duration: f64) -> Self {
        Obs { duration, event: false }
    }
}

impl From<&LifetimeRecord> for Obs {
    fn from(r: &LifetimeRecord) -> Self {
        Obs {
            duration: r.duration,
            event: r.event.is_event(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_obs: usize,
    pub min_duration: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_obs: 5,
            min_duration: crate::signals::DEFAULT_MIN_DURATION,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFit {
    pub params: Params,
    pub loglik: f64,
    pub n_events: usize,
    pub n_censored: usize,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ParamFit {
    pub fn family(&self) -> Family {
        self.params.family()
    }

    fn new(params: Params, obs: &[Obs], converged: bool, iterations: usize) -> Self {
        let loglik = loglik(&params, obs);
        let n_events = obs.iter().filter(|o| o.event).count();
        ParamFit {
            params,
            loglik,
            n_events,
            n_censored: obs.len() - n_events,
            aic: 2.0 * params.family().n_params() as f64 - 2.0 * loglik,
            converged,
            iterations,
        }
    }
}

/// Censored log-likelihood: `ln f` for events, `ln S` for censored terms.
pub fn loglik(params: &Params, obs: &[Obs]) -> f64 {
    obs.iter()
        .map(|o| {
            if o.event {
                params.log_pdf(o.duration)
            } else {
                params.log_sf(o.duration)
            }
        })
        .sum()
}

fn clamp_obs(obs: &[Obs], min_duration: f64) -> Vec<Obs> {
    obs.iter()
        .map(|o| Obs {
            duration: o.duration.max(min_duration),
            event: o.event,
        })
        .collect()
}

/// Fits one family by maximum likelihood.
pub fn fit_parametric(obs: &[Obs], family: Family, opts: &FitOptions) -> Result<ParamFit> {
    if obs.len() < opts.min_obs.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} observations, at least {} required",
            obs.len(),
            opts.min_obs.max(1)
        )));
    }
    if obs.iter().any(|o| !(o.duration.is_finite() && o.duration >= 0.0)) {
        return Err(Error::Domain("durations must be finite and non-negative".into()));
    }
    let obs = clamp_obs(obs, opts.min_duration);
    let n_events = obs.iter().filter(|o| o.event).count();
    match family {
        Family::Exponential => {
            if n_events == 0 {
                return Err(Error::AllCensored);
            }
            let total: f64 = obs.iter().map(|o| o.duration).sum();
            let tau = total / n_events as f64;
            Ok(ParamFit::new(Params::Exponential { tau }, &obs, true, 0))
        }
        Family::Weibull => {
            if n_events == 0 {
                return Err(Error::AllCensored);
            }
            Ok(fit_weibull(&obs, opts))
        }
        Family::Lognormal => {
            if n_events == 0 {
                return Err(Error::AllCensored);
            }
            Ok(fit_lognormal(&obs, opts))
        }
    }
}

/// Weighted sums `Σ t^κ`, `Σ t^κ ln t`, `Σ t^κ (ln t)²`, all divided by the
/// common factor `exp(max κ ln t)` to avoid overflow. Returns the log of that
/// factor alongside.
fn power_sums(logs: &[f64], kappa: f64) -> (f64, f64, f64, f64) {
    let shift = logs.iter().map(|l| kappa * l).fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &l in logs {
        let w = (kappa * l - shift).exp();
        s0 += w;
        s1 += w * l;
        s2 += w * l * l;
    }
    (s0, s1, s2, shift)
}

/// Profile-likelihood score in κ; decreasing in κ.
fn weibull_score(logs: &[f64], d: f64, event_log_sum: f64, kappa: f64) -> (f64, f64) {
    let (s0, s1, s2, _) = power_sums(logs, kappa);
    let m1 = s1 / s0;
    let m2 = s2 / s0;
    let g = d / kappa + event_log_sum - d * m1;
    let dg = -d / (kappa * kappa) - d * (m2 - m1 * m1);
    (g, dg)
}

fn weibull_tau(logs: &[f64], d: f64, kappa: f64) -> f64 {
    let (s0, _, _, shift) = power_sums(logs, kappa);
    ((s0.ln() + shift - d.ln()) / kappa).exp()
}

fn fit_weibull(obs: &[Obs], opts: &FitOptions) -> ParamFit {
    let logs: Vec<f64> = obs.iter().map(|o| o.duration.ln()).collect();
    let d = obs.iter().filter(|o| o.event).count() as f64;
    let event_log_sum: f64 = obs
        .iter()
        .zip(&logs)
        .filter(|(o, _)| o.event)
        .map(|(_, l)| l)
        .sum();
    let score = |k: f64| weibull_score(&logs, d, event_log_sum, k);

    let (mut lo, mut hi) = (KAPPA_MIN, KAPPA_MAX);
    let mut kappa = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    if score(lo).0 <= 0.0 {
        kappa = lo;
        converged = true;
    } else if score(hi).0 >= 0.0 {
        kappa = hi;
        converged = true;
    } else {
        while iterations < opts.max_iter {
            iterations += 1;
            let (g, dg) = score(kappa);
            if g > 0.0 {
                lo = kappa;
            } else {
                hi = kappa;
            }
            let mut next = kappa - g / dg;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let delta = (next - kappa).abs();
            kappa = next;
            if delta < opts.tol {
                converged = true;
                break;
            }
        }
    }
    let tau = weibull_tau(&logs, d, kappa);
    ParamFit::new(Params::Weibull { tau, kappa }, obs, converged, iterations)
}

fn lognormal_eval(obs: &[Obs], x: &[f64]) -> Eval {
    let (mu, rho) = (x[0], x[1]);
    let s = rho.exp();
    let (mut v, mut gm, mut gr, mut hmm, mut hmr, mut hrr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for o in obs {
        let y = o.duration.ln();
        let z = (y - mu) / s;
        if o.event {
            v += -y - rho + log_norm_pdf(z);
            gm += z / s;
            gr += z * z - 1.0;
            hmm += -1.0 / (s * s);
            hmr += -2.0 * z / s;
            hrr += -2.0 * z * z;
        } else {
            let lam = mills(z);
            let dlam = lam * (lam - z);
            v += log_norm_sf(z);
            gm += lam / s;
            gr += lam * z;
            hmm += -dlam / (s * s);
            hmr += -(dlam * z + lam) / s;
            hrr += -z * (dlam * z + lam);
        }
    }
    Eval {
        value: v,
        grad: vec![gm, gr],
        hess: vec![vec![hmm, hmr], vec![hmr, hrr]],
    }
}

fn fit_lognormal(obs: &[Obs], opts: &FitOptions) -> ParamFit {
    let ev: Vec<f64> = obs.iter().filter(|o| o.event).map(|o| o.duration.ln()).collect();
    let mean = ev.iter().sum::<f64>() / ev.len() as f64;
    let var = ev.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / ev.len() as f64;
    let s0 = var.sqrt().max(0.1);
    let mut nopts = NewtonOptions::new(2);
    nopts.grad_tol = 1e-8 * (obs.len() as f64).max(1.0);
    nopts.max_iter = opts.max_iter.max(200);
    nopts.lower[1] = (1e-4f64).ln();
    nopts.upper[1] = (1e3f64).ln();
    let r = maximize(|x| lognormal_eval(obs, x), &[mean, s0.ln()], &nopts);
    let params = Params::Lognormal {
        mu: r.x[0],
        s: r.x[1].exp(),
    };
    ParamFit::new(params, obs, r.converged, r.iterations)
}

/// Fits each family and returns the successful fits sorted by ascending AIC,
/// together with the families that failed.
pub fn compare_aic(
    obs: &[Obs],
    families: &[Family],
    opts: &FitOptions,
) -> (Vec<ParamFit>, Vec<(Family, Error)>) {
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for &f in families {
        match fit_parametric(obs, f, opts) {
            Ok(fit) => fits.push(fit),
            Err(e) => failures.push((f, e)),
        }
    }
    fits.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    (fits, failures)
}

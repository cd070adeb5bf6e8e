//! Weibull accelerated-failure-time decay surface
//! `τ(v, σ) = exp(θ₀ + θ₁v + θ₂σ + θ₃vσ)`.

use serde::{Deserialize, Serialize};

use super::dist::Family;
use super::fit::{fit_parametric, FitOptions, Obs, KAPPA_MAX, KAPPA_MIN};
use crate::error::{Error, Result};
use crate::optim::{maximize, Eval, NewtonOptions};
use crate::signals::LifetimeRecord;

/// A survival observation with the owning concept's velocity and volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AftObs {
    pub duration: f64,
    pub event: bool,
    pub v: f64,
    pub sigma: f64,
}

impl From<&LifetimeRecord> for AftObs {
    fn from(r: &LifetimeRecord) -> Self {
        AftObs {
            duration: r.duration,
            event: r.event.is_event(),
            v: r.velocity,
            sigma: r.volatility,
        }
    }
}

/// Covariate standardization. A zero standard deviation marks the covariate
/// as constant; its coefficient (and the interaction's) is pinned at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean_v: f64,
    pub sd_v: f64,
    pub mean_sigma: f64,
    pub sd_sigma: f64,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    // Treat round-off level spread as constant.
    let sd = if sd <= 1e-12 * mean.abs().max(1.0) { 0.0 } else { sd };
    (mean, sd)
}

impl Standardizer {
    pub fn fit(obs: &[AftObs]) -> Self {
        let (mean_v, sd_v) = mean_sd(obs.iter().map(|o| o.v));
        let (mean_sigma, sd_sigma) = mean_sd(obs.iter().map(|o| o.sigma));
        Standardizer {
            mean_v,
            sd_v,
            mean_sigma,
            sd_sigma,
        }
    }

    pub fn identity() -> Self {
        Standardizer {
            mean_v: 0.0,
            sd_v: 1.0,
            mean_sigma: 0.0,
            sd_sigma: 1.0,
        }
    }

    pub fn pinned(&self) -> [bool; 4] {
        let pv = self.sd_v == 0.0;
        let ps = self.sd_sigma == 0.0;
        [false, pv, ps, pv || ps]
    }

    /// Design row `(1, v_z, σ_z, v_z σ_z)`.
    pub fn design(&self, v: f64, sigma: f64) -> [f64; 4] {
        let vz = if self.sd_v == 0.0 { 0.0 } else { (v - self.mean_v) / self.sd_v };
        let sz = if self.sd_sigma == 0.0 {
            0.0
        } else {
            (sigma - self.mean_sigma) / self.sd_sigma
        };
        [1.0, vz, sz, vz * sz]
    }

    /// Converts standardized-scale coefficients to raw covariate scale.
    pub fn to_raw(&self, th: &[f64; 4]) -> [f64; 4] {
        let (mv, ms) = (self.mean_v, self.mean_sigma);
        let sv = if self.sd_v == 0.0 { 1.0 } else { self.sd_v };
        let ss = if self.sd_sigma == 0.0 { 1.0 } else { self.sd_sigma };
        let (a, b, c, d) = (th[0], th[1] / sv, th[2] / ss, th[3] / (sv * ss));
        [
            a - b * mv - c * ms + d * mv * ms,
            b - d * ms,
            c - d * mv,
            d,
        ]
    }
}

/// Linear predictor in raw scale.
pub fn raw_log_tau(theta_raw: &[f64; 4], v: f64, sigma: f64) -> f64 {
    theta_raw[0] + theta_raw[1] * v + theta_raw[2] * sigma + theta_raw[3] * v * sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFit {
    /// Coefficients on standardized covariates.
    pub theta: [f64; 4],
    pub theta_raw: [f64; 4],
    pub kappa: f64,
    pub loglik: f64,
    pub transform: Standardizer,
    pub converged: bool,
    pub iterations: usize,
    pub n_events: usize,
    pub n_censored: usize,
}

impl SurfaceFit {
    pub fn tau(&self, v: f64, sigma: f64) -> f64 {
        raw_log_tau(&self.theta_raw, v, sigma).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOptions {
    pub min_records: usize,
    pub min_events: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Adds the log-normal(0, 1) prior term `-(ln κ)²/2` to the objective.
    pub kappa_prior: bool,
    pub min_duration: f64,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            min_records: 10,
            min_events: 2,
            grad_tol: 1e-6,
            max_iter: 500,
            kappa_prior: false,
            min_duration: crate::signals::DEFAULT_MIN_DURATION,
        }
    }
}

/// How κ is treated by [`fit_aft`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaMode {
    Free,
    Fixed(f64),
    /// Free, with penalty `λ (ln κ − ln κ_target)²`.
    Shrunk { target: f64, lambda: f64 },
}

/// Quadratic penalty `λ ‖θ − θ_target‖²` on standardized coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPenalty {
    pub target: [f64; 4],
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AftFit {
    pub theta: [f64; 4],
    pub kappa: f64,
    /// Unpenalized log-likelihood.
    pub loglik: f64,
    /// Penalized objective that was maximized.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Design {
    x: Vec<[f64; 4]>,
    y: Vec<f64>,
    event: Vec<bool>,
}

impl Design {
    fn new(obs: &[AftObs], tr: &Standardizer, min_duration: f64) -> Self {
        Design {
            x: obs.iter().map(|o| tr.design(o.v, o.sigma)).collect(),
            y: obs.iter().map(|o| o.duration.max(min_duration).ln()).collect(),
            event: obs.iter().map(|o| o.event).collect(),
        }
    }

    /// Log-likelihood with gradient and Hessian in `(θ, ln κ)`.
    fn eval(&self, theta: &[f64], phi: f64) -> ([f64; 5], [[f64; 5]; 5], f64) {
        let kappa = phi.exp();
        let mut g = [0.0; 5];
        let mut h = [[0.0; 5]; 5];
        let mut v = 0.0;
        for i in 0..self.y.len() {
            let x = &self.x[i];
            let eta = x[0] * theta[0] + x[1] * theta[1] + x[2] * theta[2] + x[3] * theta[3];
            let w = kappa * (self.y[i] - eta);
            let ew = w.exp();
            let d = if self.event[i] { 1.0 } else { 0.0 };
            v += d * (phi - self.y[i] + w) - ew;
            let gt = kappa * (ew - d);
            let htt = -kappa * kappa * ew;
            let htp = kappa * (ew * (1.0 + w) - d);
            for a in 0..4 {
                g[a] += gt * x[a];
                for b in 0..4 {
                    h[a][b] += htt * x[a] * x[b];
                }
                h[a][4] += htp * x[a];
            }
            g[4] += d * (1.0 + w) - ew * w;
            h[4][4] += d * w - ew * w * (w + 1.0);
        }
        let col: [f64; 4] = std::array::from_fn(|a| h[a][4]);
        h[4][..4].copy_from_slice(&col);
        (g, h, v)
    }
}

/// Penalized Weibull AFT fit on standardized covariates, starting at
/// `theta_init` and `kappa_init`.
#[allow(clippy::too_many_arguments)]
pub fn fit_aft(
    obs: &[AftObs],
    transform: &Standardizer,
    theta_init: [f64; 4],
    kappa_init: f64,
    kappa_mode: KappaMode,
    penalty: Option<ThetaPenalty>,
    kappa_prior: bool,
    opts: &SurfaceOptions,
) -> AftFit {
    let design = Design::new(obs, transform, opts.min_duration);
    let pinned = transform.pinned();
    let kappa0 = match kappa_mode {
        KappaMode::Fixed(k) => k,
        _ => kappa_init,
    };
    let objective = |x: &[f64]| -> Eval {
        let (g, h, ll) = design.eval(&x[..4], x[4]);
        let mut value = ll;
        let mut grad = g.to_vec();
        let mut hess: Vec<Vec<f64>> = h.iter().map(|r| r.to_vec()).collect();
        if let Some(p) = penalty {
            for a in 0..4 {
                let diff = x[a] - p.target[a];
                value -= p.lambda * diff * diff;
                grad[a] -= 2.0 * p.lambda * diff;
                hess[a][a] -= 2.0 * p.lambda;
            }
        }
        if let KappaMode::Shrunk { target, lambda } = kappa_mode {
            let diff = x[4] - target.ln();
            value -= lambda * diff * diff;
            grad[4] -= 2.0 * lambda * diff;
            hess[4][4] -= 2.0 * lambda;
        }
        if kappa_prior {
            value -= 0.5 * x[4] * x[4];
            grad[4] -= x[4];
            hess[4][4] -= 1.0;
        }
        Eval { value, grad, hess }
    };
    let mut nopts = NewtonOptions::new(5);
    nopts.grad_tol = opts.grad_tol;
    nopts.max_iter = opts.max_iter;
    nopts.lower[4] = KAPPA_MIN.ln();
    nopts.upper[4] = KAPPA_MAX.ln();
    nopts.fixed[..4].copy_from_slice(&pinned);
    nopts.fixed[4] = matches!(kappa_mode, KappaMode::Fixed(_));
    let mut x0 = theta_init.to_vec();
    for a in 0..4 {
        if pinned[a] {
            x0[a] = penalty.map(|p| p.target[a]).unwrap_or(0.0);
        }
    }
    x0.push(kappa0.clamp(KAPPA_MIN, KAPPA_MAX).ln());
    let r = maximize(objective, &x0, &nopts);
    let theta = [r.x[0], r.x[1], r.x[2], r.x[3]];
    let (_, _, loglik) = design.eval(&theta, r.x[4]);
    AftFit {
        theta,
        kappa: r.x[4].exp(),
        loglik,
        objective: r.value,
        converged: r.converged,
        iterations: r.iterations,
    }
}

/// Fits the decay surface to one group of records with κ free.
pub fn fit_surface(obs: &[AftObs], opts: &SurfaceOptions) -> Result<SurfaceFit> {
    let n_events = obs.iter().filter(|o| o.event).count();
    if obs.len() < opts.min_records {
        return Err(Error::InsufficientData(format!(
            "{} records, at least {} required for a surface fit",
            obs.len(),
            opts.min_records
        )));
    }
    if n_events == 0 {
        return Err(Error::AllCensored);
    }
    if n_events < opts.min_events {
        return Err(Error::InsufficientData(format!(
            "{n_events} events, at least {} required for a surface fit",
            opts.min_events
        )));
    }
    let plain: Vec<Obs> = obs
        .iter()
        .map(|o| Obs {
            duration: o.duration,
            event: o.event,
        })
        .collect();
    let base = fit_parametric(
        &plain,
        Family::Weibull,
        &FitOptions {
            min_obs: 1,
            min_duration: opts.min_duration,
            ..Default::default()
        },
    )?;
    let super::dist::Params::Weibull { tau, kappa } = base.params else {
        unreachable!("weibull fit returns weibull parameters")
    };
    let transform = Standardizer::fit(obs);
    let fit = fit_aft(
        obs,
        &transform,
        [tau.ln(), 0.0, 0.0, 0.0],
        kappa,
        KappaMode::Free,
        None,
        opts.kappa_prior,
        opts,
    );
    Ok(SurfaceFit {
        theta: fit.theta,
        theta_raw: transform.to_raw(&fit.theta),
        kappa: fit.kappa,
        loglik: fit.loglik,
        transform,
        converged: fit.converged,
        iterations: fit.iterations,
        n_events,
        n_censored: obs.len() - n_events,
    })
}

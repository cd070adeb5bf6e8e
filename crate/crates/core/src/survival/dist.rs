//! Exponential, Weibull and log-normal lifetime distributions.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Weibull,
    Lognormal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Exponential, Family::Weibull, Family::Lognormal];

    pub fn n_params(self) -> usize {
        match self {
            Family::Exponential => 1,
            Family::Weibull | Family::Lognormal => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Weibull => "weibull",
            Family::Lognormal => "lognormal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Params {
    Exponential { tau: f64 },
    Weibull { tau: f64, kappa: f64 },
    Lognormal { mu: f64, s: f64 },
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
    }
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && !t.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be non-negative, got {t}")))
    }
}

impl Params {
    pub fn family(&self) -> Family {
        match self {
            Params::Exponential { .. } => Family::Exponential,
            Params::Weibull { .. } => Family::Weibull,
            Params::Lognormal { .. } => Family::Lognormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Params::Exponential { tau } => positive("tau", tau),
            Params::Weibull { tau, kappa } => {
                positive("tau", tau)?;
                positive("kappa", kappa)
            }
            Params::Lognormal { mu, s } => {
                if !mu.is_finite() {
                    return Err(Error::Domain(format!("mu must be finite, got {mu}")));
                }
                positive("s", s)
            }
        }
    }

    /// `ln S(t)`.
    pub fn log_sf(&self, t: f64) -> f64 {
        match *self {
            Params::Exponential { tau } => -t / tau,
            Params::Weibull { tau, kappa } => -(t / tau).powf(kappa),
            Params::Lognormal { mu, s } => {
                if t <= 0.0 {
                    0.0
                } else {
                    log_norm_sf((t.ln() - mu) / s)
                }
            }
        }
    }

    /// `ln f(t)` for `t > 0`.
    pub fn log_pdf(&self, t: f64) -> f64 {
        match *self {
            Params::Exponential { tau } => -tau.ln() - t / tau,
            Params::Weibull { tau, kappa } => {
                let y = t.ln() - tau.ln();
                kappa.ln() - tau.ln() + (kappa - 1.0) * y - (kappa * y).exp()
            }
            Params::Lognormal { mu, s } => {
                let z = (t.ln() - mu) / s;
                -t.ln() - s.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
            }
        }
    }

    pub fn sf(&self, t: f64) -> f64 {
        self.log_sf(t).exp()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return match *self {
                Params::Exponential { tau } => 1.0 / tau,
                Params::Weibull { tau, kappa: 1.0 } => 1.0 / tau,
                Params::Weibull { kappa, .. } if kappa > 1.0 => 0.0,
                Params::Weibull { .. } => f64::INFINITY,
                Params::Lognormal { .. } => 0.0,
            };
        }
        self.log_pdf(t).exp()
    }

    /// Hazard `f(t) / S(t)`.
    pub fn hazard(&self, t: f64) -> f64 {
        match *self {
            Params::Exponential { tau } => 1.0 / tau,
            Params::Weibull { tau, kappa } => kappa / tau * (t / tau).powf(kappa - 1.0),
            Params::Lognormal { .. } => {
                if t <= 0.0 {
                    0.0
                } else {
                    (self.log_pdf(t) - self.log_sf(t)).exp()
                }
            }
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            Params::Exponential { tau } => tau * LN_2,
            Params::Weibull { tau, kappa } => tau * LN_2.powf(1.0 / kappa),
            Params::Lognormal { mu, .. } => mu.exp(),
        }
    }
}

pub fn exponential_sf(t: f64, tau: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Exponential { tau };
    p.validate()?;
    Ok(p.sf(t))
}

pub fn exponential_pdf(t: f64, tau: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Exponential { tau };
    p.validate()?;
    Ok(p.pdf(t))
}

pub fn weibull_sf(t: f64, tau: f64, kappa: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Weibull { tau, kappa };
    p.validate()?;
    Ok(p.sf(t))
}

pub fn weibull_pdf(t: f64, tau: f64, kappa: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Weibull { tau, kappa };
    p.validate()?;
    Ok(p.pdf(t))
}

pub fn lognormal_sf(t: f64, mu: f64, s: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Lognormal { mu, s };
    p.validate()?;
    Ok(p.sf(t))
}

pub fn lognormal_pdf(t: f64, mu: f64, s: f64) -> Result<f64> {
    check_t(t)?;
    let p = Params::Lognormal { mu, s };
    p.validate()?;
    Ok(p.pdf(t))
}

/// `ln φ(z)` for the standard normal density.
pub(crate) fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// `ln Φ̄(z)`, accurate far into the upper tail.
pub(crate) fn log_norm_sf(z: f64) -> f64 {
    if z < 30.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        log_norm_pdf(z) - z.ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Inverse Mills ratio `φ(z) / Φ̄(z)`.
pub(crate) fn mills(z: f64) -> f64 {
    (log_norm_pdf(z) - log_norm_sf(z)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardPeak {
    pub t_peak: f64,
    pub hazard_at_peak: f64,
    /// Whether the hazard is decreasing at the supplied reference age.
    pub decreasing_at_reference: Option<bool>,
}

/// Locates the maximum of the log-normal hazard by golden-section search on
/// `ln t` over `[1e-6, 1e8]` days.
pub fn lognormal_hazard_peak(mu: f64, s: f64, reference_age: Option<f64>) -> Result<HazardPeak> {
    let p = Params::Lognormal { mu, s };
    p.validate()?;
    let h = |x: f64| p.log_pdf(x.exp()) - p.log_sf(x.exp());
    let (mut a, mut b) = (1e-6f64.ln(), 1e8f64.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = h(d);
        }
    }
    let t_peak = (0.5 * (a + b)).exp();
    let decreasing_at_reference = reference_age.map(|age| {
        let step = 1e-4 * age.max(1e-9);
        p.hazard(age + step) < p.hazard(age)
    });
    Ok(HazardPeak {
        t_peak,
        hazard_at_peak: p.hazard(t_peak),
        decreasing_at_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sf_at_zero_is_one() {
        assert_eq!(weibull_sf(0.0, 5.0, 0.3).unwrap(), 1.0);
        assert_eq!(exponential_sf(0.0, 5.0).unwrap(), 1.0);
        assert_eq!(lognormal_sf(0.0, 1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(weibull_sf(-1.0, 5.0, 1.0).is_err());
        assert!(weibull_sf(1.0, 0.0, 1.0).is_err());
        assert!(weibull_pdf(1.0, 1.0, -2.0).is_err());
        assert!(lognormal_pdf(1.0, 0.0, 0.0).is_err());
        assert!(exponential_pdf(1.0, f64::NAN).is_err());
    }

    #[test]
    fn appendix_freshness_value() {
        let s = weibull_sf(10.0, 98.0, 1.0).unwrap();
        assert!((s - 0.903).abs() < 0.001);
    }

    #[test]
    fn weibull_pdf_matches_closed_form() {
        let (t, tau, k): (f64, f64, f64) = (3.0, 7.0, 1.7);
        let expected = k / tau * (t / tau).powf(k - 1.0) * (-(t / tau).powf(k)).exp();
        assert!((weibull_pdf(t, tau, k).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn lognormal_matches_statrs() {
        use statrs::distribution::{Continuous, ContinuousCDF, LogNormal};
        let d = LogNormal::new(1.3, 0.8).unwrap();
        for t in [0.01, 0.5, 3.0, 40.0] {
            assert!((lognormal_pdf(t, 1.3, 0.8).unwrap() - d.pdf(t)).abs() < 1e-12);
            assert!((lognormal_sf(t, 1.3, 0.8).unwrap() - d.sf(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_tail_is_continuous() {
        let below = log_norm_sf(29.999_999);
        let above = log_norm_sf(30.0);
        assert!((below - above).abs() < 1e-4);
        assert!(log_norm_sf(200.0).is_finite());
    }

    #[test]
    fn hazard_peak_satisfies_first_order_condition() {
        // At the peak, λ(z) = z + s where λ is the inverse Mills ratio.
        let (mu, s) = (2.0, 0.9);
        let peak = lognormal_hazard_peak(mu, s, None).unwrap();
        let z = (peak.t_peak.ln() - mu) / s;
        assert!((mills(z) - (z + s)).abs() < 1e-5);
    }

    #[test]
    fn hazard_decreasing_after_peak() {
        let peak = lognormal_hazard_peak(0.0, 1.0, Some(50.0)).unwrap();
        assert_eq!(peak.decreasing_at_reference, Some(true));
        let early = lognormal_hazard_peak(0.0, 1.0, Some(0.01)).unwrap();
        assert_eq!(early.decreasing_at_reference, Some(false));
    }

    proptest! {
        #[test]
        fn weibull_kappa_one_is_exponential(t in 0.0f64..1e4, tau in 0.01f64..1e4) {
            let w = weibull_sf(t, tau, 1.0).unwrap();
            let e = exponential_sf(t, tau).unwrap();
            prop_assert!((w - e).abs() <= 1e-12 * e.max(1e-300));
            if t > 0.0 {
                let wp = weibull_pdf(t, tau, 1.0).unwrap();
                let ep = exponential_pdf(t, tau).unwrap();
                prop_assert!((wp - ep).abs() <= 1e-12 * ep.max(1e-300));
            }
        }

        #[test]
        fn survival_is_monotone(
            a in 0.0f64..1e3, b in 0.0f64..1e3,
            tau in 0.1f64..1e3, kappa in 0.05f64..20.0, mu in -3.0f64..8.0, s in 0.05f64..4.0,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for p in [
                Params::Exponential { tau },
                Params::Weibull { tau, kappa },
                Params::Lognormal { mu, s },
            ] {
                prop_assert!(p.sf(hi) <= p.sf(lo));
                prop_assert!(p.sf(0.0) == 1.0);
                prop_assert!(p.sf(1e12) < 1e-3 || p.family() == Family::Weibull && kappa < 0.1);
            }
        }

        #[test]
        fn hazard_peak_is_argmax(mu in -2.0f64..6.0, s in 0.1f64..3.0) {
            let peak = lognormal_hazard_peak(mu, s, None).unwrap();
            let p = Params::Lognormal { mu, s };
            for f in [0.2, 0.5, 0.9, 0.99, 1.01, 1.1, 2.0, 5.0] {
                prop_assert!(p.hazard(peak.t_peak * f) <= peak.hazard_at_peak * (1.0 + 1e-9));
            }
        }
    }
}

//! Censored parametric survival models and the decay surface.

pub mod dist;
pub mod fit;
pub mod floor;
pub mod surface;

pub use dist::{
    exponential_pdf, exponential_sf, lognormal_hazard_peak, lognormal_pdf, lognormal_sf, weibull_pdf,
    weibull_sf, Family, HazardPeak, Params,
};
pub use fit::{compare_aic, fit_parametric, loglik, FitOptions, Obs, ParamFit, KAPPA_MAX, KAPPA_MIN};
pub use floor::{apply_floor, gap_pools, median, tau_floor};
pub use surface::{
    fit_aft, fit_surface, raw_log_tau, AftFit, AftObs, KappaMode, Standardizer, SurfaceFit, SurfaceOptions,
    ThetaPenalty,
};

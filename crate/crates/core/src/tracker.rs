//! Radius of spatial analyticity: measured from the Fourier decay of a
//! solution and compared with the explicit lower-bound curve.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::EvolutionState;
use crate::norms::{self, KMParams};
use crate::par::{self, Exec};
use crate::spectral::Field;
use crate::taylor::linear_fit;

/// Default floor for the decay fit, relative to `max |u^|`.
pub const DEFAULT_FIT_FLOOR: f64 = 1e-13;
pub const MIN_FIT_MODES: usize = 8;
/// Tail tolerance of the adaptive Kato-Masuda truncation used for `||u0||_{sigma0,2}`.
pub const KM_TAIL_TOLERANCE: f64 = 1e-12;
pub const KM_MAX_ORDER: usize = 400;
/// A fit whose quadratic term bends the log-spectrum by more than this over
/// the band is reported as a lower bound only.
const CURVATURE_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub r_measured: f64,
    pub fit_r2: f64,
    pub band: (f64, f64),
    pub modes_used: usize,
    /// The spectrum fell below the floor before the end of the grid.
    pub floor_hit: bool,
    /// The log-spectrum is visibly concave over the band (faster than
    /// exponential decay), so `r_measured` only bounds the radius from below.
    pub lower_bound_only: bool,
}

/// Fits `log |u^(xi)| ~ c - r xi` over `xi in [xi_max/4, xi_hi]`, where
/// `xi_hi` is the last wavenumber above `floor * max |u^|`.
pub fn radius_from_spectrum(u: &Field, floor: f64) -> Result<RadiusEstimate> {
    let grid = *u.grid();
    let spec = u.spectrum();
    let half = grid.n_points / 2;
    let peak = spec.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    let cut = floor * peak;
    // positive modes only; a real field has a conjugate-symmetric spectrum
    let above: Vec<(f64, f64)> = (1..half)
        .filter_map(|k| {
            let a = spec[k].norm();
            (a > cut && a > 0.0).then(|| (grid.wavenumber(k), a.ln()))
        })
        .collect();
    let xi_lo = grid.xi_max() / 4.0;
    let xi_hi = above.last().map_or(0.0, |p| p.0);
    let pts: Vec<(f64, f64)> = above.into_iter().filter(|p| p.0 >= xi_lo).collect();
    if pts.len() < MIN_FIT_MODES {
        return Err(Error::InsufficientBand {
            usable: pts.len(),
            required: MIN_FIT_MODES,
        });
    }
    let (slope, intercept) = linear_fit(&pts);
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let fit_r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let width = xi_hi - xi_lo.max(pts[0].0);
    let bend = quadratic_coefficient(&pts) * width * width;
    Ok(RadiusEstimate {
        r_measured: -slope,
        fit_r2,
        band: (pts[0].0, xi_hi),
        modes_used: pts.len(),
        floor_hit: xi_hi < grid.wavenumber(half - 1),
        lower_bound_only: bend < -CURVATURE_LIMIT,
    })
}

/// Leading coefficient of the least-squares parabola through `pts`.
fn quadratic_coefficient(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    // centred monomials keep the normal equations well conditioned
    let (mut s2, mut s3, mut s4, mut sy, mut sxy, mut sxxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let d = x - mx;
        s2 += d * d;
        s3 += d * d * d;
        s4 += d * d * d * d;
        sy += y;
        sxy += d * y;
        sxxy += d * d * y;
    }
    // [n 0 s2; 0 s2 s3; s2 s3 s4] [c0 c1 c2]^T = [sy sxy sxxy]^T
    let det = n * (s2 * s4 - s3 * s3) - s2 * s2 * s2;
    if det.abs() < f64::MIN_POSITIVE {
        return 0.0;
    }
    (n * (s2 * sxxy - s3 * sxy) - s2 * s2 * sy) / det
}

/// Constants of the explicit analyticity bound for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub sigma0: f64,
    pub mu_bound: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    /// `||u0||_{sigma0,2}`.
    pub u0_km: f64,
    /// Its square as summed, so that `rho(0)` reproduces `Phi(u0)` exactly.
    pub u0_km_sq: f64,
    /// Truncation order used for `u0_km`; reused for every later `Phi`.
    pub km_order: usize,
    pub km_certified: bool,
}

impl BoundConstants {
    /// Constants from a given norm value, with `km_order = 0`.
    pub fn from_norm(u0_km: f64, sigma0: f64, mu_bound: f64) -> Result<Self> {
        if !(sigma0 < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma0 must be negative, got {sigma0}"
            )));
        }
        if !(mu_bound >= 1.0 && mu_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu_bound must be at least 1, got {mu_bound}"
            )));
        }
        if !(u0_km >= 0.0 && u0_km.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid norm {u0_km}")));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        let l1 = 28.0 * sqrt2 / 9.0 * u0_km;
        // A = 4 sqrt2 (4 + 3 mu) / (9 mu) * n, written as a fraction of L1 so
        // that A == L1 holds bitwise at mu = 1
        let a = l1 * ((4.0 + 3.0 * mu_bound) / (7.0 * mu_bound));
        let b = 72.0 * mu_bound;
        Ok(Self {
            sigma0,
            mu_bound,
            k: norms::k_bar(mu_bound),
            a,
            b,
            l1,
            l2: b,
            l3: (sigma0 + l1).exp(),
            u0_km,
            u0_km_sq: u0_km * u0_km,
            km_order: 0,
            km_certified: true,
        })
    }
}

/// Evaluates `||u0||_{sigma0,2}` adaptively and builds the constants.
pub fn bound_constants(u0: &Field, sigma0: f64, mu_bound: f64) -> Result<BoundConstants> {
    if !(sigma0 < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma0 must be negative, got {sigma0}"
        )));
    }
    let km = norms::km_norm_adaptive(u0, sigma0, KM_TAIL_TOLERANCE, KM_MAX_ORDER);
    let mut c = BoundConstants::from_norm(km.norm_sq.sqrt(), sigma0, mu_bound)?;
    c.u0_km_sq = km.norm_sq;
    c.km_order = km.m;
    c.km_certified = km.certified;
    Ok(c)
}

/// `sigma(t) = sigma0 - A (e^{Bt} - 1)`.
pub fn sigma_of_t(c: &BoundConstants, t: f64) -> f64 {
    c.sigma0 - c.a * (c.b * t).exp_m1()
}

/// `rho(t) = ||u0||^2 e^{Kt} / 2`.
pub fn rho_of_t(c: &BoundConstants, t: f64) -> f64 {
    0.5 * c.u0_km_sq * (c.k * t).exp()
}

pub fn log_rho_of_t(c: &BoundConstants, t: f64) -> f64 {
    (0.5 * c.u0_km_sq).ln() + c.k * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub log: f64,
    /// `exp(log)`; underflows to 0 quickly.
    pub value: f64,
}

/// `L3 exp(-L1 e^{L2 t})`, evaluated as `sigma0 - L1 (e^{L2 t} - 1)` in log space.
pub fn lower_bound_r(c: &BoundConstants, t: f64) -> LowerBound {
    let log = c.sigma0 - c.l1 * (c.l2 * t).exp_m1();
    LowerBound {
        log,
        value: log.exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The radius could not be measured at this time.
    Flagged,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "true",
            Verdict::Fail => "false",
            Verdict::Flagged => "flagged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusRow {
    pub t: f64,
    pub estimate: Option<RadiusEstimate>,
    pub sigma_t: f64,
    pub log_lower_bound: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

/// One row per state: measured radius against the lower bound, compared as logarithms.
pub fn track(states: &[EvolutionState], c: &BoundConstants, exec: Exec) -> Vec<RadiusRow> {
    par::map(exec, states, |s| {
        let sigma_t = sigma_of_t(c, s.t);
        let bound = lower_bound_r(c, s.t);
        match radius_from_spectrum(&s.u, DEFAULT_FIT_FLOOR) {
            Ok(est) => RadiusRow {
                t: s.t,
                verdict: if est.r_measured > 0.0 && est.r_measured.ln() >= bound.log {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                estimate: Some(est),
                sigma_t,
                log_lower_bound: bound.log,
                note: None,
            },
            Err(e) => RadiusRow {
                t: s.t,
                estimate: None,
                sigma_t,
                log_lower_bound: bound.log,
                verdict: Verdict::Flagged,
                note: Some(e.to_string()),
            },
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiCheck {
    pub t: f64,
    pub phi: f64,
    pub rho: f64,
    pub pass: bool,
}

/// `Phi_{sigma(t), m}(u(t)) <= rho(t)` with `m = c.km_order`.
pub fn phi_rho_check(states: &[EvolutionState], c: &BoundConstants, exec: Exec) -> Vec<PhiCheck> {
    par::map(exec, states, |s| {
        let p = KMParams::new(sigma_of_t(c, s.t), c.km_order);
        let phi = norms::phi(&s.u, p);
        let rho = rho_of_t(c, s.t);
        PhiCheck {
            t: s.t,
            phi,
            rho,
            pass: phi <= rho,
        }
    })
}

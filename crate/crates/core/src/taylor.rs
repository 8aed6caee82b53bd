//! Power series in time, `u(t) = sum_k a_k t^k`, built from the quadratic
//! structure of the right-hand side, and the explicit lifespan formulas.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::nonlinear_operator;
use crate::norms::sobolev_norm;
use crate::par::{self, Exec};
use crate::spectral::{self, Field};

pub const MAX_ORDER: usize = 40;
pub const DEFAULT_ORDER: usize = 24;
/// Orders whose `H^2` norm falls below this fraction of `||a_0||` are ignored by the radius fit.
pub const RADIUS_FIT_FLOOR: f64 = 1e-14;
/// Largest energy fraction a coefficient may carry in the outer fifth of the
/// dealiased band before the series is truncated.
pub const DEFAULT_EDGE_GUARD: f64 = 1e-6;

/// The polarized right-hand side: `Q(v, w) = d_x(vw) - vw + (d_x + 1) Lambda^{-2}(vw)`.
pub fn bilinear_q(v: &Field, w: &Field) -> Result<Field> {
    Ok(nonlinear_operator(&spectral::product(v, w)?))
}

/// Energy fraction in `0.8 N/3 < |k| <= N/3`, the top of the band products can fill.
pub fn band_edge_fraction(f: &Field) -> f64 {
    let grid = *f.grid();
    let cut = grid.dealias_cutoff() as f64;
    let (mut total, mut edge) = (0.0, 0.0);
    for (i, c) in f.spectrum().iter().enumerate() {
        let k = grid.mode(i).unsigned_abs() as f64;
        let e = c.norm_sqr();
        total += e;
        if k > 0.8 * cut && k <= cut {
            edge += e;
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct TaylorSeries {
    /// `a_0 ..= a_K`.
    pub coefficients: Vec<Field>,
    pub h2_norms: Vec<f64>,
    /// Order originally requested; larger than `order()` when truncated.
    pub requested_order: usize,
    pub warnings: Vec<String>,
}

impl TaylorSeries {
    /// Builds a series from given coefficient fields.
    pub fn from_coefficients(coefficients: Vec<Field>) -> Result<Self> {
        let first = coefficients
            .first()
            .ok_or_else(|| Error::InvalidParameter("a series needs at least a_0".into()))?;
        for c in &coefficients[1..] {
            first.check_grid(c)?;
        }
        let h2_norms = coefficients.iter().map(|c| sobolev_norm(c, 2.0)).collect();
        Ok(Self {
            requested_order: coefficients.len() - 1,
            coefficients,
            h2_norms,
            warnings: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn truncated(&self) -> bool {
        self.order() < self.requested_order
    }
}

/// Coefficients of the time series of the solution from `u0`.
///
/// `a_{k+1} = (k+1)^{-1} sum_{j=0}^{k} Q(a_j, a_{k-j})`. The series is cut
/// short, with a warning, as soon as a new coefficient leaves the resolved band.
pub fn taylor_coefficients(u0: &Field, order: usize) -> Result<TaylorSeries> {
    taylor_coefficients_with(u0, order, DEFAULT_EDGE_GUARD, Exec::default())
}

pub fn taylor_coefficients_with(
    u0: &Field,
    order: usize,
    edge_guard: f64,
    exec: Exec,
) -> Result<TaylorSeries> {
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "Taylor order {order} exceeds {MAX_ORDER}"
        )));
    }
    let tail = spectral::tail_fraction(u0);
    if tail > crate::evolution::DEFAULT_RESOLUTION_GUARD {
        return Err(Error::UnderResolved {
            tail,
            guard: crate::evolution::DEFAULT_RESOLUTION_GUARD,
        });
    }
    let grid = *u0.grid();
    let mut series = TaylorSeries::from_coefficients(vec![u0.clone()])?;
    series.requested_order = order;
    // dealiased samples of each coefficient, reused by every later order
    let mut cut: Vec<Vec<f64>> = vec![spectral::dealias(u0).samples().to_vec()];
    for k in 0..order {
        let half = k / 2;
        let partial: Vec<Vec<f64>> = par::map_range(exec, half + 1, |j| {
            let (a, b) = (&cut[j], &cut[k - j]);
            let weight = if j == k - j { 1.0 } else { 2.0 };
            a.iter().zip(b).map(|(x, y)| weight * x * y).collect()
        });
        let mut acc = vec![0.0; grid.n_points];
        for p in &partial {
            for (s, v) in acc.iter_mut().zip(p) {
                *s += v;
            }
        }
        let w = spectral::dealias(&Field::from_samples_unchecked(grid, acc));
        let next = nonlinear_operator(&w).scale(1.0 / (k + 1) as f64);
        if !next.is_finite() {
            return Err(Error::NonFinite { t: 0.0 });
        }
        let edge = band_edge_fraction(&next);
        if edge > edge_guard {
            series.warnings.push(format!(
                "coefficient {} carries {:.3e} of its energy at the band edge (guard {:.1e}); series truncated at order {}",
                k + 1,
                edge,
                edge_guard,
                k
            ));
            break;
        }
        series.h2_norms.push(sobolev_norm(&next, 2.0));
        cut.push(next.samples().to_vec());
        series.coefficients.push(next);
    }
    Ok(series)
}

/// Horner evaluation of the partial sum at time `t`.
pub fn taylor_eval(series: &TaylorSeries, t: f64) -> Field {
    let grid = *series.coefficients[0].grid();
    let mut acc = vec![0.0; grid.n_points];
    for c in series.coefficients.iter().rev() {
        for (s, v) in acc.iter_mut().zip(c.samples()) {
            *s = *s * t + v;
        }
    }
    Field::from_samples_unchecked(grid, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusFit {
    /// Estimated convergence radius in `t`; `f64::INFINITY` when the tail vanishes.
    pub radius: f64,
    pub infinite: bool,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub orders_used: usize,
}

/// Least-squares fit of `log ||a_k||_{H^2}` against `k` over the top half of
/// the orders; the radius is `exp(-slope)`.
pub fn convergence_radius_estimate(series: &TaylorSeries) -> Result<RadiusFit> {
    let k_max = series.order();
    if k_max < 8 {
        return Err(Error::InvalidParameter(format!(
            "radius fit needs at least 8 orders, series has {k_max}"
        )));
    }
    let floor = RADIUS_FIT_FLOOR * series.h2_norms[0].max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = (k_max.div_ceil(2)..=k_max)
        .filter(|&k| series.h2_norms[k] > floor)
        .map(|k| (k as f64, series.h2_norms[k].ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(RadiusFit {
            radius: f64::INFINITY,
            infinite: true,
            residual: 0.0,
            orders_used: pts.len(),
        });
    }
    let (slope, intercept) = linear_fit(&pts);
    let residual = (pts
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(RadiusFit {
        radius: (-slope).exp(),
        infinite: false,
        residual,
        orders_used: pts.len(),
    })
}

/// Ordinary least squares `y = slope x + intercept`.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifespanReport {
    pub t_aot: f64,
    pub t_thm22: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub c_s: f64,
    pub u0_gnorm: f64,
    /// Set when the norm could not be resolved on the grid at `sigma = 1`.
    pub u0_gnorm_unresolved: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `T = R / (16 L R + 8 M)` with `M = 3 c e^{-1} n^2` and `L = 6 c e^{-1} (R + n)`.
pub fn lifespan_aot(u0_gnorm: f64, r: f64, c_s: f64) -> Result<LifespanReport> {
    check_positive("u0_gnorm", u0_gnorm)?;
    check_positive("R", r)?;
    check_positive("c_s", c_s)?;
    let e = std::f64::consts::E;
    let m = 3.0 * c_s * u0_gnorm * u0_gnorm / e;
    let l = 6.0 * c_s * (r + u0_gnorm) / e;
    Ok(LifespanReport {
        t_aot: r / (16.0 * l * r + 8.0 * m),
        t_thm22: lifespan_thm22(u0_gnorm, c_s)?,
        r,
        m,
        l,
        c_s,
        u0_gnorm,
        u0_gnorm_unresolved: false,
    })
}

/// `T = e / (216 c ||u0||)`.
pub fn lifespan_thm22(u0_gnorm: f64, c_s: f64) -> Result<f64> {
    check_positive("u0_gnorm", u0_gnorm)?;
    check_positive("c_s", c_s)?;
    Ok(std::f64::consts::E / (216.0 * c_s * u0_gnorm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, rhs, StepConfig};
    use crate::spectral::GridSpec;
    use std::f64::consts::E;

    fn sech_field(g: GridSpec) -> Field {
        Field::from_fn(g, |x| 1.0 / x.cosh()).unwrap()
    }

    #[test]
    fn q_basic_identities() {
        let g = GridSpec::new(20.0, 256).unwrap();
        let u = sech_field(g);
        let v = Field::from_fn(g, |x| (-x * x / 4.0).exp() * (1.0 + 0.3 * x.sin())).unwrap();
        assert_eq!(bilinear_q(&Field::zeros(g), &v).unwrap().max_abs(), 0.0);
        assert_eq!(bilinear_q(&u, &u).unwrap().samples(), rhs(&u).unwrap().samples());
        let a = bilinear_q(&u, &v).unwrap();
        let b = bilinear_q(&v, &u).unwrap();
        assert!(a.max_diff(&b).unwrap() < 1e-15);
        let other = GridSpec::new(20.0, 128).unwrap();
        assert!(bilinear_q(&u, &Field::zeros(other)).is_err());
    }

    #[test]
    fn trivial_series() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let s = taylor_coefficients(&Field::zeros(g), 10).unwrap();
        assert_eq!(s.order(), 10);
        assert!(s.coefficients.iter().all(|c| c.max_abs() == 0.0));
        let fit = convergence_radius_estimate(&s).unwrap();
        assert!(fit.infinite && fit.radius.is_infinite());

        let s = taylor_coefficients(&Field::constant(g, 2.5), 10).unwrap();
        assert!(s.coefficients[1..].iter().all(|c| c.max_abs() < 1e-13));
        assert!(taylor_coefficients(&Field::zeros(g), 41).is_err());
    }

    #[test]
    fn eval_examples() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let a0 = sech_field(g);
        let a1 = Field::from_fn(g, |x| x.sin()).unwrap();
        let s = TaylorSeries::from_coefficients(vec![a0.clone(), a1.clone()]).unwrap();
        assert_eq!(taylor_eval(&s, 0.0).samples(), a0.samples());
        let t = 0.37;
        let got = taylor_eval(&s, t);
        for j in 0..g.n_points {
            assert_eq!(got.samples()[j], a1.samples()[j] * t + a0.samples()[j]);
        }
    }

    /// The defining recursion: `a_1 = F(a_0)` and
    /// `(k+1) a_{k+1} = sum_j Q(a_j, a_{k-j})` evaluated pairwise.
    #[test]
    fn recursion_matches_pairwise_q() {
        let g = GridSpec::default();
        let s = taylor_coefficients(&sech_field(g), 6).unwrap();
        assert_eq!(s.order(), 6);
        assert!(s.coefficients[1].max_diff(&rhs(&s.coefficients[0]).unwrap()).unwrap() < 1e-14);
        for k in 0..6 {
            let mut acc = Field::zeros(g);
            for j in 0..=k {
                acc = acc
                    .add(&bilinear_q(&s.coefficients[j], &s.coefficients[k - j]).unwrap())
                    .unwrap();
            }
            let lhs = s.coefficients[k + 1].scale((k + 1) as f64);
            let scale = acc.max_abs().max(1e-300);
            assert!(lhs.max_diff(&acc).unwrap() / scale < 1e-12, "order {k}");
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let g = GridSpec::new(20.0, 256).unwrap();
        let u = sech_field(g);
        let a = taylor_coefficients_with(&u, 12, 1.0, Exec::Sequential).unwrap();
        let b = taylor_coefficients_with(&u, 12, 1.0, Exec::Parallel).unwrap();
        assert_eq!(a.order(), 12);
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert_eq!(x.samples(), y.samples());
        }
    }

    #[test]
    fn matches_rk4_on_sech() {
        // at N = 1024 the band-edge guard stops the series near order 8
        let g = GridSpec::new(40.0, 2048).unwrap();
        let u0 = sech_field(g);
        let s = taylor_coefficients(&u0, 20).unwrap();
        let cfg = StepConfig {
            t_end: 0.05,
            ..StepConfig::default()
        };
        let run = evolve(&u0, &cfg, &[]).unwrap();
        let diff = taylor_eval(&s, 0.05).max_diff(&run.states[0].u).unwrap();
        assert_eq!(s.order(), 20);
        assert!(diff < 1e-8);
        let s25 = taylor_coefficients(&u0, 25).unwrap();
        let d = taylor_eval(&s, 0.05).max_diff(&taylor_eval(&s25, 0.05)).unwrap();
        assert!(d < 1e-10);
    }

    #[test]
    fn geometric_series_radius() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let phi = sech_field(g);
        let r: f64 = 0.37;
        let coeffs = (0..=20).map(|k| phi.scale(r.powi(-k))).collect();
        let s = TaylorSeries::from_coefficients(coeffs).unwrap();
        let fit = convergence_radius_estimate(&s).unwrap();
        assert!((fit.radius / r - 1.0).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
        let short = TaylorSeries::from_coefficients(vec![phi.clone(); 5]).unwrap();
        assert!(convergence_radius_estimate(&short).is_err());
    }

    #[test]
    fn lifespan_examples() {
        let r = lifespan_aot(1.0, 1.0, 1.0).unwrap();
        assert!((r.m - 3.0 / E).abs() < 1e-15);
        assert!((r.l - 12.0 / E).abs() < 1e-15);
        assert!((r.t_aot / (E / 216.0) - 1.0).abs() < 1e-14);
        let r2 = lifespan_aot(1.0, 1.0, 2.0).unwrap();
        assert!((r2.t_aot / r.t_aot - 0.5).abs() < 1e-14);
        let r3 = lifespan_aot(2.0, 2.0, 1.0).unwrap();
        assert!((r3.t_aot / (E / 432.0) - 1.0).abs() < 1e-14);
        assert!((lifespan_thm22(1.0, 1.0).unwrap() - 0.012585).abs() < 1e-6);
        assert!((lifespan_thm22(2.0, 1.0).unwrap() / (E / 432.0) - 1.0).abs() < 1e-15);
        for n in [0.3, 1.0, 4.2] {
            let a = lifespan_aot(n, n, 1.7).unwrap().t_aot;
            assert!((a / lifespan_thm22(n, 1.7).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!(lifespan_aot(0.0, 1.0, 1.0).is_err());
        assert!(lifespan_thm22(1.0, -1.0).is_err());
    }

    #[test]
    fn coarse_grid_truncates_with_warning() {
        let g = GridSpec::new(20.0, 256).unwrap();
        let s = taylor_coefficients(&sech_field(g), 20).unwrap();
        assert!(s.truncated());
        assert!(s.order() >= 1 && s.order() < 20);
        assert_eq!(s.warnings.len(), 1);
    }
}

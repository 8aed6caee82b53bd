//! Pseudospherical-surface data carried by a solution: the six 1-form
//! coefficients, the first fundamental form, the genericity indicator, the
//! Gaussian curvature of the metric and the zero-curvature (AKNS) residual.
//!
//! Every coefficient is affine in two scalar fields, the momentum
//! `m = u - u_xx` and `n = 2um + psi`:
//!
//! ```text
//! f11 = m                 f12 = n
//! f21 = mu m + s c        f22 = mu n              c = m1 sqrt(1 + mu^2)
//! f31 = s r m + m1 mu     f32 = s r n             r = sqrt(1 + mu^2)
//! ```
//!
//! so derivatives of the metric are assembled from derivatives of `m` and `n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{self, momentum};
use crate::par::{self, Exec};
use crate::spectral::{self, Field, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PSSParams {
    pub mu_metric: f64,
    pub m1: i32,
    /// `+1` or `-1`, the branch of the `±` in the forms.
    pub sign: i32,
}

impl Default for PSSParams {
    fn default() -> Self {
        Self {
            mu_metric: 0.0,
            m1: -2,
            sign: 1,
        }
    }
}

impl PSSParams {
    pub fn new(mu_metric: f64, m1: i32, sign: i32) -> Result<Self> {
        let p = Self {
            mu_metric,
            m1,
            sign,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 != -2 && self.m1 != 1 {
            return Err(Error::InvalidParameter(format!("m1 must be -2 or 1, got {}", self.m1)));
        }
        if self.sign != 1 && self.sign != -1 {
            return Err(Error::InvalidParameter(format!("sign must be +1 or -1, got {}", self.sign)));
        }
        if !self.mu_metric.is_finite() {
            return Err(Error::InvalidParameter("mu_metric must be finite".into()));
        }
        Ok(())
    }

    fn r(&self) -> f64 {
        (1.0 + self.mu_metric * self.mu_metric).sqrt()
    }

    /// `m1 sqrt(1 + mu^2)`.
    fn c(&self) -> f64 {
        self.m1 as f64 * self.r()
    }

    fn s(&self) -> f64 {
        self.sign as f64
    }
}

/// Pointwise values of `u, u_x, u_xx` on some set of abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub u_x: Vec<f64>,
    pub u_xx: Vec<f64>,
}

impl Jet {
    /// Spectral jet of a periodic field. Spectral roundoff is removed first,
    /// since the curvature differentiates these samples again in `x` and `t`.
    pub fn of_field(u: &Field) -> Result<Self> {
        let u = &u.denoised();
        Ok(Self {
            x: u.grid().nodes(),
            u: u.samples().to_vec(),
            u_x: spectral::derivative(u, 1)?.samples().to_vec(),
            u_xx: spectral::derivative(u, 2)?.samples().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

fn psi_point(u: f64, ux: f64, m1: f64) -> f64 {
    4.0 * u * ux / m1 - 2.0 * ux * ux - 2.0 * u * u
}

/// `psi = 4 u u_x / m1 - 2 u_x^2 - 2 u^2`.
pub fn psi(u: &Field, p: PSSParams) -> Result<Field> {
    p.validate()?;
    let ux = spectral::derivative(u, 1)?;
    let m1 = p.m1 as f64;
    Field::from_samples(
        *u.grid(),
        u.samples()
            .iter()
            .zip(ux.samples())
            .map(|(&a, &b)| psi_point(a, b, m1))
            .collect(),
    )
}

/// Coefficients `f_ij` of the 1-forms `w_i = f_i1 dx + f_i2 dt`, sampled pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForms {
    pub params: PSSParams,
    /// Present when the samples live on a periodic grid.
    pub grid: Option<GridSpec>,
    pub f11: Vec<f64>,
    pub f12: Vec<f64>,
    pub f21: Vec<f64>,
    pub f22: Vec<f64>,
    pub f31: Vec<f64>,
    pub f32: Vec<f64>,
}

impl OneForms {
    /// The momentum `m`, equal to `f11`.
    pub fn momentum(&self) -> &[f64] {
        &self.f11
    }

    /// `n = 2um + psi`, equal to `f12`.
    pub fn n(&self) -> &[f64] {
        &self.f12
    }

    pub fn len(&self) -> usize {
        self.f11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f11.is_empty()
    }
}

/// Forms from a pointwise jet.
pub fn one_forms_from_jet(jet: &Jet, p: PSSParams) -> Result<OneForms> {
    p.validate()?;
    let m1 = p.m1 as f64;
    let (m, n): (Vec<f64>, Vec<f64>) = (0..jet.len())
        .map(|j| {
            let (u, ux, uxx) = (jet.u[j], jet.u_x[j], jet.u_xx[j]);
            let m = u - uxx;
            (m, 2.0 * u * m + psi_point(u, ux, m1))
        })
        .unzip();
    Ok(forms_from_mn(m, n, p))
}

fn forms_from_mn(m: Vec<f64>, n: Vec<f64>, p: PSSParams) -> OneForms {
    let (mu, r, c, s, m1) = (p.mu_metric, p.r(), p.c(), p.s(), p.m1 as f64);
    OneForms {
        params: p,
        grid: None,
        f21: m.iter().map(|&m| mu * m + s * c).collect(),
        f22: n.iter().map(|&n| mu * n).collect(),
        f31: m.iter().map(|&m| s * r * m + m1 * mu).collect(),
        f32: n.iter().map(|&n| s * r * n).collect(),
        f11: m,
        f12: n,
    }
}

/// Forms of a solution snapshot. Time derivatives of the forms are taken
/// downstream (chain rule or stencils), so only `u` is needed here.
///
/// `2um + psi` equals `-w_xx + (2/m1) w_x` with `w = u^2`, so `n` is built
/// from the solver's dealiased square. The forms then obey the structure
/// equations of the discrete dynamics rather than picking up aliasing from
/// pointwise products.
pub fn one_forms(u: &Field, p: PSSParams) -> Result<OneForms> {
    p.validate()?;
    let w = spectral::square(u);
    let k = 2.0 / p.m1 as f64;
    let n = spectral::apply_multiplier(&w, false, |xi| Complex64::new(xi * xi, k * xi));
    let mut f = forms_from_mn(momentum(u).samples().to_vec(), n.samples().to_vec(), p);
    f.grid = Some(*u.grid());
    Ok(f)
}

/// First fundamental form `E dx^2 + 2F dx dt + G dt^2` of `w1^2 + w2^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub params: PSSParams,
    pub grid: Option<GridSpec>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// `EG - F^2`.
    pub det: Vec<f64>,
    pub genericity: Vec<f64>,
    /// Building blocks `m`, `n` (see the module docs).
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

/// Agreement required between the two routes to `E, F, G`.
pub const METRIC_CROSSCHECK_TOL: f64 = 1e-10;

/// Metric from the forms, cross-checked against the closed-form expressions
/// in `m` and `n`.
pub fn metric(forms: &OneForms) -> Result<MetricSample> {
    let p = forms.params;
    let (mu, r, s, m1) = (p.mu_metric, p.r(), p.s(), p.m1 as f64);
    let len = forms.len();
    let mut out = MetricSample {
        params: p,
        grid: forms.grid,
        e: Vec::with_capacity(len),
        f: Vec::with_capacity(len),
        g: Vec::with_capacity(len),
        det: Vec::with_capacity(len),
        genericity: genericity_indicator(forms),
        m: forms.f11.clone(),
        n: forms.f12.clone(),
    };
    let mut mismatch = 0.0_f64;
    for j in 0..len {
        let (f11, f12, f21, f22) = (forms.f11[j], forms.f12[j], forms.f21[j], forms.f22[j]);
        let e = f11 * f11 + f21 * f21;
        let f = f11 * f12 + f21 * f22;
        let g = f12 * f12 + f22 * f22;
        let (m, n) = (f11, f12);
        let b = mu * m + s * m1 * r;
        let e2 = m * m + b * b;
        let f2 = n * ((1.0 + mu * mu) * m + s * m1 * mu * r);
        let g2 = (1.0 + mu * mu) * n * n;
        let scale = 1.0 + e.abs() + g.abs();
        mismatch = mismatch
            .max((e - e2).abs() / scale)
            .max((f - f2).abs() / scale)
            .max((g - g2).abs() / scale);
        out.e.push(e);
        out.f.push(f);
        out.g.push(g);
        out.det.push(e * g - f * f);
    }
    if mismatch > METRIC_CROSSCHECK_TOL {
        return Err(Error::MetricMismatch { mismatch });
    }
    Ok(out)
}

/// `f11 f22 - f12 f21`, the `dx ^ dt` coefficient of `w1 ^ w2`.
pub fn genericity_indicator(forms: &OneForms) -> Vec<f64> {
    (0..forms.len())
        .map(|j| forms.f11[j] * forms.f22[j] - forms.f12[j] * forms.f21[j])
        .collect()
}

/// Largest `|indicator|` and the interval around its maximiser on which the
/// indicator stays above `rel_threshold` of that maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenericitySupport {
    pub max_abs: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

pub fn genericity_support(ind: &[f64], x: &[f64], rel_threshold: f64) -> GenericitySupport {
    let (imax, max_abs) = ind
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let thr = rel_threshold * max_abs;
    let mut lo = imax;
    while lo > 0 && ind[lo - 1].abs() >= thr {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < ind.len() && ind[hi + 1].abs() >= thr {
        hi += 1;
    }
    GenericitySupport {
        max_abs,
        x_lo: x.get(lo).copied().unwrap_or(0.0),
        x_hi: x.get(hi).copied().unwrap_or(0.0),
    }
}

/// Pointwise metric with the derivatives the Brioschi formula needs, in
/// coordinates `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricJet {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub e_x: f64,
    pub e_t: f64,
    pub e_tt: f64,
    pub f_x: f64,
    pub f_t: f64,
    pub f_xt: f64,
    pub g_x: f64,
    pub g_t: f64,
    pub g_xx: f64,
}

fn det3(a: [[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Gaussian curvature by the Brioschi formula.
pub fn brioschi(j: &MetricJet) -> f64 {
    let first = det3([
        [
            -0.5 * j.e_tt + j.f_xt - 0.5 * j.g_xx,
            0.5 * j.e_x,
            j.f_x - 0.5 * j.e_t,
        ],
        [j.f_t - 0.5 * j.g_x, j.e, j.f],
        [0.5 * j.g_t, j.f, j.g],
    ]);
    let second = det3([
        [0.0, 0.5 * j.e_t, 0.5 * j.g_x],
        [0.5 * j.e_t, j.e, j.f],
        [0.5 * j.g_x, j.f, j.g],
    ]);
    let d = j.e * j.g - j.f * j.f;
    (first - second) / (d * d)
}

/// Default genericity threshold, relative to `max |indicator|` over the slab.
pub const DEFAULT_GENERICITY_THRESHOLD: f64 = 1e-6;

/// Curvature on one interior time slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSlice {
    pub t: f64,
    /// Grid indices where the metric was judged nondegenerate.
    pub points: Vec<usize>,
    /// `K` at those points.
    pub k: Vec<f64>,
    pub max_abs_k_plus_1: f64,
    /// Smallest `|indicator|` among the evaluated points.
    pub min_abs_genericity: f64,
}

impl CurvatureSlice {
    fn empty(t: f64) -> Self {
        Self {
            t,
            points: Vec::new(),
            k: Vec::new(),
            max_abs_k_plus_1: 0.0,
            min_abs_genericity: f64::INFINITY,
        }
    }

    fn push(&mut self, j: usize, k: f64, indicator: f64) {
        self.max_abs_k_plus_1 = self.max_abs_k_plus_1.max((k + 1.0).abs());
        self.min_abs_genericity = self.min_abs_genericity.min(indicator.abs());
        self.points.push(j);
        self.k.push(k);
    }

    fn finish(mut self) -> Self {
        if self.points.is_empty() {
            self.min_abs_genericity = 0.0;
        }
        self
    }
}

/// Values and derivatives of the momentum `m` and of `n = 2um + psi` at one point.
#[derive(Debug, Clone, Copy)]
struct MnJet {
    m: f64,
    m_x: f64,
    m_t: f64,
    m_tt: f64,
    m_xt: f64,
    n: f64,
    n_x: f64,
    n_xx: f64,
    n_t: f64,
    n_xt: f64,
}

impl MnJet {
    /// Chain rule from `(m, n)` to the metric components and their derivatives.
    fn metric_jet(&self, p: PSSParams) -> MetricJet {
        let mu = p.mu_metric;
        let q = 1.0 + mu * mu;
        let sc = p.s() * p.c();
        let MnJet { m: a, m_x: a_x, m_t: a_t, m_tt: a_tt, m_xt, n, n_x, n_xx, n_t, n_xt } = *self;
        let b = mu * a + sc;
        let (b_x, b_t, b_tt) = (mu * a_x, mu * a_t, mu * a_tt);
        let pp = q * a + mu * sc;
        let (pp_x, pp_t, pp_xt) = (q * a_x, q * a_t, q * m_xt);
        MetricJet {
            e: a * a + b * b,
            f: n * pp,
            g: q * n * n,
            e_x: 2.0 * (a * a_x + b * b_x),
            e_t: 2.0 * (a * a_t + b * b_t),
            e_tt: 2.0 * (a_t * a_t + a * a_tt + b_t * b_t + b * b_tt),
            f_x: n_x * pp + n * pp_x,
            f_t: n_t * pp + n * pp_t,
            f_xt: n_xt * pp + n_x * pp_t + n_t * pp_x + n * pp_xt,
            g_x: 2.0 * q * n * n_x,
            g_t: 2.0 * q * n * n_t,
            g_xx: 2.0 * q * (n_x * n_x + n * n_xx),
        }
    }
}

const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

fn stencil(w: &[f64; 5], rows: [&[f64]; 5], j: usize, scale: f64) -> f64 {
    (0..5).map(|i| w[i] * rows[i][j]).sum::<f64>() * scale
}

/// Gaussian curvature at every interior time of a uniformly spaced metric series.
///
/// `x`-derivatives are spectral; `t`-derivatives use fourth-order centred
/// stencils of spacing `dt_stencil`. Points where `|indicator|` is below
/// `rel_threshold * max |indicator|` (maximum over the whole series) are skipped.
pub fn gaussian_curvature(
    series: &[(f64, MetricSample)],
    dt_stencil: f64,
    rel_threshold: f64,
    exec: Exec,
) -> Result<Vec<CurvatureSlice>> {
    if series.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "curvature needs at least 5 time samples, got {}",
            series.len()
        )));
    }
    if !(dt_stencil > 0.0) {
        return Err(Error::InvalidParameter("dt_stencil must be positive".into()));
    }
    for w in series.windows(2) {
        let gap = w[1].0 - w[0].0;
        if (gap - dt_stencil).abs() > 1e-9 * dt_stencil.max(w[1].0.abs()) {
            return Err(Error::InvalidParameter(format!(
                "time samples must be spaced by {dt_stencil}, found gap {gap}"
            )));
        }
    }
    let grid = series[0]
        .1
        .grid
        .ok_or_else(|| Error::InvalidParameter("curvature needs periodic samples".into()))?;
    let p = series[0].1.params;
    for (_, s) in series {
        if s.grid != Some(grid) {
            return Err(Error::GridMismatch);
        }
        if s.params != p {
            return Err(Error::InvalidParameter("metric parameters differ along the series".into()));
        }
    }
    let ind_max = series
        .iter()
        .flat_map(|(_, s)| s.genericity.iter())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let threshold = rel_threshold * ind_max;

    // One band for the whole series: a per-snapshot noise cut would switch
    // modes on and off between samples, which the time stencils amplify.
    let fields: Vec<(Field, Field)> = series
        .iter()
        .map(|(_, s)| {
            (
                Field::from_samples_unchecked(grid, s.m.clone()),
                Field::from_samples_unchecked(grid, s.n.clone()),
            )
        })
        .collect();
    // measured on u itself, recovered from the momentum
    let band = fields
        .iter()
        .map(|(m, _)| spectral::resolved_band(&spectral::helmholtz_inverse(m)))
        .max()
        .unwrap_or(0);
    let blocks: Vec<[Vec<f64>; 5]> = par::map(exec, &fields, |(m, n)| {
        let (m, n) = (spectral::lowpass(m, band), spectral::lowpass(n, band));
        let d = |f: &Field, k| spectral::derivative(f, k).expect("low order").samples().to_vec();
        [m.samples().to_vec(), d(&m, 1), n.samples().to_vec(), d(&n, 1), d(&n, 2)]
    });

    let (h1, h2) = (1.0 / (12.0 * dt_stencil), 1.0 / (12.0 * dt_stencil * dt_stencil));
    let slices = par::map_range(exec, series.len() - 4, |i0| {
        let c = i0 + 2;
        let rows = |b: usize| -> [&[f64]; 5] { [0, 1, 2, 3, 4].map(|o| blocks[i0 + o][b].as_slice()) };
        let (rm, rmx, rn, rnx) = (rows(0), rows(1), rows(2), rows(3));
        let [m, m_x, n, n_x, n_xx] = &blocks[c];
        let ind = &series[c].1.genericity;
        let mut slice = CurvatureSlice::empty(series[c].0);
        for j in 0..grid.n_points {
            if !(ind[j].abs() >= threshold) || ind[j] == 0.0 {
                continue;
            }
            let local = MnJet {
                m: m[j],
                m_x: m_x[j],
                m_t: stencil(&D1, rm, j, h1),
                m_tt: stencil(&D2, rm, j, h2),
                m_xt: stencil(&D1, rmx, j, h1),
                n: n[j],
                n_x: n_x[j],
                n_xx: n_xx[j],
                n_t: stencil(&D1, rn, j, h1),
                n_xt: stencil(&D1, rnx, j, h1),
            };
            slice.push(j, brioschi(&local.metric_jet(p)), ind[j]);
        }
        slice.finish()
    });
    if slices.iter().all(|s| s.points.is_empty()) {
        return Err(Error::NoEvaluationPoints);
    }
    Ok(slices)
}

/// Curvature of a single snapshot with the time derivatives taken from the
/// equation (`u_t = F(u)`, `u_tt = F'(u) u_t`) instead of stencils.
///
/// Stencils lose accuracy near the zero set of the indicator: the solution's
/// time-analyticity radius bounds the truncation error from below at large
/// spacings and roundoff grows as `1/h^2` at small ones, both divided by
/// `indicator^2`. This variant separates the geometry from that sampling error.
pub fn curvature_from_flow(u: &Field, t: f64, p: PSSParams, rel_threshold: f64) -> Result<CurvatureSlice> {
    p.validate()?;
    let u_t = evolution::rhs(u)?;
    let w_t = spectral::product(u, &u_t)?.scale(2.0);
    let u_tt = evolution::nonlinear_operator(&w_t);
    let k = 2.0 / p.m1 as f64;
    let n_of = |w: &Field| spectral::apply_multiplier(w, false, |xi| Complex64::new(xi * xi, k * xi));
    let d = |f: &Field, order| spectral::derivative(f, order).map(|g| g.samples().to_vec());
    let (m, m_t) = (momentum(u), momentum(&u_t));
    let m_tt = momentum(&u_tt);
    let (n, n_t) = (n_of(&spectral::square(u)), n_of(&w_t));
    let (m_x, m_xt) = (d(&m, 1)?, d(&m_t, 1)?);
    let (n_x, n_xx, n_xt) = (d(&n, 1)?, d(&n, 2)?, d(&n_t, 1)?);
    let ind = metric(&one_forms(u, p)?)?.genericity;
    let threshold = rel_threshold * ind.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut slice = CurvatureSlice::empty(t);
    for j in 0..u.grid().n_points {
        if !(ind[j].abs() >= threshold) || ind[j] == 0.0 {
            continue;
        }
        let local = MnJet {
            m: m.samples()[j],
            m_x: m_x[j],
            m_t: m_t.samples()[j],
            m_tt: m_tt.samples()[j],
            m_xt: m_xt[j],
            n: n.samples()[j],
            n_x: n_x[j],
            n_xx: n_xx[j],
            n_t: n_t.samples()[j],
            n_xt: n_xt[j],
        };
        slice.push(j, brioschi(&local.metric_jet(p)), ind[j]);
    }
    if slice.points.is_empty() {
        return Err(Error::NoEvaluationPoints);
    }
    Ok(slice.finish())
}

/// `sl(2, R)` pair, one matrix per grid point, `[[a, b], [c, d]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AknsPair {
    pub x: Vec<[[f64; 2]; 2]>,
    pub t: Vec<[[f64; 2]; 2]>,
}

pub fn akns_matrices(forms: &OneForms) -> AknsPair {
    let mat = |a: f64, b: f64, c: f64| [[0.5 * a, 0.5 * (b - c)], [0.5 * (b + c), -0.5 * a]];
    AknsPair {
        x: (0..forms.len())
            .map(|j| mat(forms.f21[j], forms.f11[j], forms.f31[j]))
            .collect(),
        t: (0..forms.len())
            .map(|j| mat(forms.f22[j], forms.f12[j], forms.f32[j]))
            .collect(),
    }
}

/// `max |X_t - T_x + [X, T]|` with `u_t` taken from the equation.
pub fn zero_curvature_residual(u: &Field, p: PSSParams) -> Result<f64> {
    let ut = evolution::rhs(u)?;
    zero_curvature_residual_with(u, &ut, p)
}

/// The same residual for a caller-supplied `u_t`; `X_t` follows from
/// `m_t = u_t - d_x^2 u_t` by the chain rule.
pub fn zero_curvature_residual_with(u: &Field, u_t: &Field, p: PSSParams) -> Result<f64> {
    p.validate()?;
    if p.m1 != -2 {
        return Err(Error::InvalidParameter(
            "the AKNS pair is only formulated for m1 = -2".into(),
        ));
    }
    u.check_grid(u_t)?;
    // Pointwise products here, unlike `one_forms`: the residual is meant to
    // see how far the collocated solution is from satisfying the pair.
    let forms = one_forms_from_jet(&Jet::of_field(u)?, p)?;
    let pair = akns_matrices(&forms);
    let m_t = momentum(u_t);
    let n = Field::from_samples(*u.grid(), forms.f12.clone())?;
    let n_x = spectral::derivative(&n, 1)?;
    let (mu, r, s) = (p.mu_metric, p.r(), p.s());
    let mut worst = 0.0_f64;
    for j in 0..forms.len() {
        let mt = m_t.samples()[j];
        // f11_t = m_t, f21_t = mu m_t, f31_t = s r m_t
        let xt = [
            [0.5 * mu * mt, 0.5 * (1.0 - s * r) * mt],
            [0.5 * (1.0 + s * r) * mt, -0.5 * mu * mt],
        ];
        let nx = n_x.samples()[j];
        let tx = [
            [0.5 * mu * nx, 0.5 * (1.0 - s * r) * nx],
            [0.5 * (1.0 + s * r) * nx, -0.5 * mu * nx],
        ];
        let (a, b) = (pair.x[j], pair.t[j]);
        for i in 0..2 {
            for k in 0..2 {
                let comm = a[i][0] * b[0][k] + a[i][1] * b[1][k] - b[i][0] * a[0][k] - b[i][1] * a[1][k];
                worst = worst.max((xt[i][k] - tx[i][k] + comm).abs());
            }
        }
    }
    Ok(worst)
}

/// Closed-form families on which the indicator vanishes identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nongeneric {
    /// `sqrt(a e^{-x} + b)`, for `m1 = -2`.
    SqrtExpM2 { a: f64, b: f64 },
    /// `sqrt(a e^{2x} + b)`, for `m1 = 1`.
    SqrtExpP1 { a: f64, b: f64 },
    /// `f e^x` at a fixed time, for `m1 = 1`.
    FExp { f: f64 },
}

impl Nongeneric {
    pub fn m1(&self) -> i32 {
        match self {
            Nongeneric::SqrtExpM2 { .. } => -2,
            _ => 1,
        }
    }
}

/// Exact jet of a nongeneric family on `n` equally spaced points of `[x0, x1]`.
pub fn nongeneric_reference(kind: Nongeneric, window: (f64, f64), n: usize) -> Result<Jet> {
    if n < 2 || !(window.1 > window.0) {
        return Err(Error::InvalidParameter("window needs x0 < x1 and at least 2 points".into()));
    }
    let h = (window.1 - window.0) / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|j| window.0 + j as f64 * h).collect();
    let mut jet = Jet {
        x: x.clone(),
        u: Vec::with_capacity(n),
        u_x: Vec::with_capacity(n),
        u_xx: Vec::with_capacity(n),
    };
    for &xv in &x {
        let (u, ux, uxx) = match kind {
            Nongeneric::SqrtExpM2 { a, b } | Nongeneric::SqrtExpP1 { a, b } => {
                // phi = sqrt(R), R = a e^{kx} + b: phi' = R'/(2 phi), phi'' = R''/(2 phi) - R'^2/(4 phi^3)
                let k = if matches!(kind, Nongeneric::SqrtExpM2 { .. }) { -1.0 } else { 2.0 };
                let e = a * (k * xv).exp();
                let rad = e + b;
                if rad <= 0.0 {
                    return Err(Error::Domain(format!("negative radicand {rad} at x = {xv}")));
                }
                let phi = rad.sqrt();
                let (r1, r2) = (k * e, k * k * e);
                (phi, r1 / (2.0 * phi), r2 / (2.0 * phi) - r1 * r1 / (4.0 * phi * rad))
            }
            Nongeneric::FExp { f } => {
                let v = f * xv.exp();
                (v, v, v)
            }
        };
        jet.u.push(u);
        jet.u_x.push(ux);
        jet.u_xx.push(uxx);
    }
    Ok(jet)
}

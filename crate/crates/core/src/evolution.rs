//! Time evolution of `u_t = F(u)` in the nonlocal form
//!
//! ```text
//! F(u) = d_x u^2 - u^2 + d_x Lambda^{-2} u^2 + Lambda^{-2} u^2
//! ```
//!
//! with classical RK4 on the pseudospectral method-of-lines system, plus
//! momentum diagnostics and guard monitoring.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Aborted, Error, Result};
use crate::norms;
use crate::spectral::{self, Field, GridSpec};

/// Default resolution guard on [`spectral::tail_fraction`].
pub const DEFAULT_RESOLUTION_GUARD: f64 = 1e-10;

/// The linear part of `F` applied to `w = u^2`:
/// `(i xi - 1 + (1 + i xi)/(1 + xi^2)) w^`.
pub(crate) fn nonlinear_operator(w: &Field) -> Field {
    spectral::apply_multiplier(w, true, |xi| {
        let h = 1.0 / (1.0 + xi * xi);
        Complex64::new(h - 1.0, xi + xi * h)
    })
}

fn check_resolution(u: &Field, guard: f64) -> Result<()> {
    let tail = spectral::tail_fraction(u);
    if tail > guard {
        Err(Error::UnderResolved { tail, guard })
    } else {
        Ok(())
    }
}

/// `F(u)` with the default resolution guard.
pub fn rhs(u: &Field) -> Result<Field> {
    rhs_guarded(u, DEFAULT_RESOLUTION_GUARD)
}

pub fn rhs_guarded(u: &Field, guard: f64) -> Result<Field> {
    check_resolution(u, guard)?;
    Ok(nonlinear_operator(&spectral::square(u)))
}

/// The original form `d_x u^2 + d_x Lambda^{-2}(u^2 + d_x u^2)`, assembled
/// from the individual spectral primitives.
pub fn rhs_original_form(u: &Field) -> Result<Field> {
    let w = spectral::square(u);
    let wx = spectral::derivative(&w, 1)?;
    let inner = spectral::helmholtz_inverse(&w.add(&wx)?);
    wx.add(&spectral::derivative(&inner, 1)?)
}

/// Max-norm gap between the two forms of the right-hand side.
pub fn rhs_form_check(u: &Field) -> Result<f64> {
    rhs(u)?.max_diff(&rhs_original_form(u)?)
}

/// `m = u - u_xx`.
pub fn momentum(u: &Field) -> Field {
    spectral::apply_multiplier(u, false, |xi| Complex64::new(1.0 + xi * xi, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub resolution_guard: f64,
    pub cfl_guard: f64,
    /// Abort with a wave-breaking report once `max |u_x|` exceeds this.
    pub slope_ceiling: f64,
    /// Abort when `min m < -tol_m` or `min u < -tol_u` for nonnegative initial momentum.
    pub positivity_tolerance_m: f64,
    pub positivity_tolerance_u: f64,
    /// Sobolev index of the `u_hs` diagnostic.
    pub diag_s: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::Rk4,
            resolution_guard: DEFAULT_RESOLUTION_GUARD,
            cfl_guard: 0.5,
            slope_ceiling: 1e3,
            positivity_tolerance_m: 1e-8,
            positivity_tolerance_u: 1e-10,
            diag_s: 2.0,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub m_l1: f64,
    pub u_l1: f64,
    pub u_h2: f64,
    pub u_hs: f64,
    pub min_m: f64,
    pub min_u: f64,
    pub energy_tail: f64,
    pub max_ux: f64,
    /// Fraction of `int u^2` outside `|x| <= L/2`.
    pub outer_mass: f64,
}

impl DiagnosticsRecord {
    pub fn compute(u: &Field, s: f64) -> Self {
        let m = momentum(u);
        let ux = spectral::derivative(u, 1).expect("order 1 is always supported");
        Self {
            m_l1: spectral::integrate_abs(&m),
            u_l1: spectral::integrate_abs(u),
            u_h2: norms::sobolev_norm(u, 2.0),
            u_hs: norms::sobolev_norm(u, s),
            min_m: m.min(),
            min_u: u.min(),
            energy_tail: spectral::tail_fraction(u),
            max_ux: ux.max_abs(),
            outer_mass: spectral::outer_mass_fraction(u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub u: Field,
    pub diag: DiagnosticsRecord,
}

impl EvolutionState {
    pub fn new(u: Field, s: f64) -> Self {
        let diag = DiagnosticsRecord::compute(&u, s);
        Self { t: 0.0, u, diag }
    }
}

/// Non-fatal events seen during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardEvent {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

fn rk4(u: &Field, h: f64, guard: f64) -> Result<Field> {
    let k1 = rhs_guarded(u, guard)?;
    let k2 = rhs_guarded(&u.axpy(0.5 * h, &k1)?, guard)?;
    let k3 = rhs_guarded(&u.axpy(0.5 * h, &k2)?, guard)?;
    let k4 = rhs_guarded(&u.axpy(h, &k3)?, guard)?;
    let grid = *u.grid();
    let out: Vec<f64> = (0..grid.n_points)
        .map(|j| {
            u.samples()[j]
                + h / 6.0
                    * (k1.samples()[j] + 2.0 * k2.samples()[j] + 2.0 * k3.samples()[j] + k4.samples()[j])
        })
        .collect();
    Ok(Field::from_samples_unchecked(grid, out))
}

/// Advances by `h` (normally `cfg.dt`; shorter when landing on a sample time).
/// `check_positivity` enables the momentum/solution sign guard.
pub fn step_by(
    state: &EvolutionState,
    cfg: &StepConfig,
    h: f64,
    check_positivity: bool,
) -> Result<EvolutionState> {
    let cfl = h * state.u.max_abs() * state.u.grid().xi_max();
    if cfl > cfg.cfl_guard {
        return Err(Error::Cfl {
            value: cfl,
            guard: cfg.cfl_guard,
        });
    }
    let u = rk4(&state.u, h, cfg.resolution_guard)?;
    let t = state.t + h;
    if !u.is_finite() {
        return Err(Error::NonFinite { t });
    }
    let diag = DiagnosticsRecord::compute(&u, cfg.diag_s);
    if diag.max_ux > cfg.slope_ceiling {
        return Err(Error::WaveBreaking {
            t,
            slope: diag.max_ux,
            ceiling: cfg.slope_ceiling,
        });
    }
    if check_positivity {
        if diag.min_m < -cfg.positivity_tolerance_m {
            return Err(Error::Positivity {
                quantity: "m",
                min: diag.min_m,
                t,
            });
        }
        if diag.min_u < -cfg.positivity_tolerance_u {
            return Err(Error::Positivity {
                quantity: "u",
                min: diag.min_u,
                t,
            });
        }
    }
    Ok(EvolutionState { t, u, diag })
}

/// One full RK4 step of size `cfg.dt`.
pub fn step(state: &EvolutionState, cfg: &StepConfig) -> Result<EvolutionState> {
    step_by(state, cfg, cfg.dt, state.diag.min_m >= 0.0)
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct EvolutionRun {
    /// States at the requested sample times (the final state if none were requested).
    pub states: Vec<EvolutionState>,
    /// Largest `||u||_{H^2}` over every step of the run.
    pub max_u_h2: f64,
    pub steps: usize,
    pub events: Vec<GuardEvent>,
}

pub type RunAborted = Aborted<EvolutionRun>;

/// Relative slack below which a remaining interval counts as already landed.
const LANDING_EPS: f64 = 1e-9;

/// Integrates from `u0` at `t = 0` up to `cfg.t_end`, landing exactly on every
/// sample time.
pub fn evolve(
    u0: &Field,
    cfg: &StepConfig,
    sample_times: &[f64],
) -> std::result::Result<EvolutionRun, Box<RunAborted>> {
    let empty = EvolutionRun {
        states: Vec::new(),
        max_u_h2: 0.0,
        steps: 0,
        events: Vec::new(),
    };
    let fail = |run: EvolutionRun, cause: Error| {
        Err(Box::new(Aborted {
            last_good: run,
            cause,
        }))
    };
    if let Err(e) = cfg.validate() {
        return fail(empty, e);
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0])
        || sample_times
            .iter()
            .any(|&t| !(t >= 0.0 && t <= cfg.t_end + LANDING_EPS * cfg.dt))
    {
        return fail(
            empty,
            Error::InvalidParameter("sample times must increase within [0, t_end]".into()),
        );
    }
    let targets: Vec<f64> = if sample_times.is_empty() {
        vec![cfg.t_end]
    } else {
        sample_times.to_vec()
    };

    let mut state = EvolutionState::new(u0.clone(), cfg.diag_s);
    let check_positivity = state.diag.min_m >= -cfg.positivity_tolerance_m;
    let mut run = EvolutionRun {
        states: Vec::with_capacity(targets.len()),
        max_u_h2: state.diag.u_h2,
        steps: 0,
        events: Vec::new(),
    };
    if !check_positivity {
        run.events.push(GuardEvent {
            t: 0.0,
            kind: "positivity_unmonitored".into(),
            detail: format!("initial min m = {:e}", state.diag.min_m),
        });
    }
    let mut outer_warned = false;
    for &target in &targets {
        loop {
            let remaining = target - state.t;
            if remaining <= LANDING_EPS * cfg.dt {
                break;
            }
            let h = if remaining <= cfg.dt * (1.0 + LANDING_EPS) {
                remaining
            } else {
                cfg.dt
            };
            match step_by(&state, cfg, h, check_positivity) {
                Ok(mut next) => {
                    if h == remaining {
                        next.t = target;
                    }
                    run.steps += 1;
                    run.max_u_h2 = run.max_u_h2.max(next.diag.u_h2);
                    if !outer_warned && next.diag.outer_mass > 1e-12 {
                        outer_warned = true;
                        run.events.push(GuardEvent {
                            t: next.t,
                            kind: "domain_truncation".into(),
                            detail: format!(
                                "mass fraction outside |x| <= L/2 is {:e}",
                                next.diag.outer_mass
                            ),
                        });
                    }
                    state = next;
                }
                Err(cause) => {
                    run.states.push(state);
                    return fail(run, cause);
                }
            }
        }
        state.t = target;
        run.states.push(state.clone());
    }
    Ok(run)
}

/// Initial-data families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `u0 = a sech(x / w)`.
    Sech { amplitude: f64, width: f64 },
    /// `m0 = a exp(-(x/w)^2)`, `u0 = Lambda^{-2} m0`.
    GaussianMomentum { amplitude: f64, width: f64 },
    /// `m0 = a exp(-(x/w)^2) (1 + eps cos(xi_k x))` with `xi_k = pi k / L`.
    ModePerturbation {
        amplitude: f64,
        width: f64,
        epsilon: f64,
        mode: i64,
    },
    /// `x,value` samples; the grid is taken from the file.
    FromFile { path: String },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Sech {
            amplitude: 1.0,
            width: 1.0,
        }
    }
}

/// Relative tolerance on `min m0` when positivity is required. Spectral
/// truncation leaves tiny negative ripples in the far field; this matches the
/// slack of the run-time positivity monitor.
const POSITIVITY_SLACK: f64 = 1e-8;

/// Builds `u0` on `grid`; rejects data whose momentum is negative when
/// `require_positive`.
pub fn initial_data(kind: &InitialData, grid: GridSpec, require_positive: bool) -> Result<Field> {
    let check_width = |w: f64| {
        if w > 0.0 && w.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("width must be positive, got {w}")))
        }
    };
    let u0 = match *kind {
        InitialData::Sech { amplitude, width } => {
            check_width(width)?;
            Field::from_fn(grid, |x| amplitude / (x / width).cosh())?
        }
        InitialData::GaussianMomentum { amplitude, width } => {
            check_width(width)?;
            let m0 = Field::from_fn(grid, |x| amplitude * (-(x / width).powi(2)).exp())?;
            spectral::helmholtz_inverse(&m0)
        }
        InitialData::ModePerturbation {
            amplitude,
            width,
            epsilon,
            mode,
        } => {
            check_width(width)?;
            let xi = std::f64::consts::PI * mode as f64 / grid.half_width;
            let m0 = Field::from_fn(grid, |x| {
                amplitude * (-(x / width).powi(2)).exp() * (1.0 + epsilon * (xi * x).cos())
            })?;
            spectral::helmholtz_inverse(&m0)
        }
        InitialData::FromFile { ref path } => {
            let file = std::fs::File::open(path)?;
            spectral::read_samples_csv(file)?
        }
    };
    if require_positive {
        let m0 = momentum(&u0);
        let min = m0.min();
        if min < -POSITIVITY_SLACK * m0.max_abs() {
            return Err(Error::NegativeMomentum { min });
        }
    }
    Ok(u0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn line_grid() -> GridSpec {
        GridSpec::new(40.0, 1024).unwrap()
    }

    #[test]
    fn rhs_equilibria() {
        let g = line_grid();
        assert_eq!(rhs(&Field::zeros(g)).unwrap().max_abs(), 0.0);
        assert!(rhs(&Field::constant(g, 1.7)).unwrap().max_abs() < 1e-14);
    }

    /// Independent oracle for the original form: closed-form derivatives of
    /// sech^2 and a direct convolution with exp(-|x|)/2.
    #[test]
    fn rhs_sech_matches_original_form_oracle() {
        let g = line_grid();
        let u = Field::from_fn(g, sech).unwrap();
        let f = rhs(&u).unwrap();
        // d_x sech^2 = -2 sech^2 tanh
        let w = |x: f64| sech(x).powi(2);
        let wx = |x: f64| -2.0 * sech(x).powi(2) * x.tanh();
        // F = wx + d_x g * (w + wx), with d_x g(x) = -sign(x) e^{-|x|}/2;
        // the kernel jumps at y = x0, so integrate each side separately
        let simpson = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for j in 1..n {
                acc += f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        for &j in &[473usize, 497, 507, 512, 516, 530, 590] {
            let x0 = g.node(j);
            let src = |y: f64| w(y) + wx(y);
            let left = simpson(x0 - 40.0, x0, &|y| -(-(x0 - y)).exp() / 2.0 * src(y));
            let right = simpson(x0, x0 + 40.0, &|y| (-(y - x0)).exp() / 2.0 * src(y));
            let oracle = wx(x0) + left + right;
            assert!((f.samples()[j] - oracle).abs() < 1e-9, "x {x0}");
        }
        assert!(rhs_form_check(&u).unwrap() <= 1e-10);
    }

    #[test]
    fn form_check_examples() {
        let g = line_grid();
        assert_eq!(rhs_form_check(&Field::zeros(g)).unwrap(), 0.0);
        let xi1 = PI / g.half_width;
        let c = Field::from_fn(g, |x| (xi1 * x).cos()).unwrap();
        assert!(rhs_form_check(&c).unwrap() <= 1e-12);
    }

    #[test]
    fn under_resolved_rejected() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let rough = Field::from_fn(g, |x| if x.abs() < 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(rhs(&rough), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn momentum_examples() {
        let g = line_grid();
        assert_eq!(momentum(&Field::zeros(g)).max_abs(), 0.0);
        let u = Field::from_fn(g, sech).unwrap();
        let m = momentum(&u);
        let want = Field::from_fn(g, |x| 2.0 * sech(x).powi(3)).unwrap();
        assert!(m.max_diff(&want).unwrap() < 1e-9);
        assert!(spectral::helmholtz_inverse(&m).max_diff(&u).unwrap() < 1e-10);
    }

    #[test]
    fn zero_and_constant_are_preserved() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let cfg = StepConfig {
            t_end: 0.05,
            dt: 0.01,
            ..StepConfig::default()
        };
        let zero = evolve(&Field::zeros(g), &cfg, &[]).unwrap();
        assert_eq!(zero.states.len(), 1);
        assert_eq!(zero.states[0].u.max_abs(), 0.0);
        let c = evolve(&Field::constant(g, 0.8), &cfg, &[0.02, 0.05]).unwrap();
        for s in &c.states {
            assert!(s.u.samples().iter().all(|v| (v - 0.8).abs() < 1e-14));
        }
        assert_eq!(c.states[1].t, 0.05);
    }

    #[test]
    fn t_end_zero_returns_initial_state() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let cfg = StepConfig {
            t_end: 0.0,
            ..StepConfig::default()
        };
        let u0 = Field::from_fn(g, sech).unwrap();
        let run = evolve(&u0, &cfg, &[]).unwrap();
        assert_eq!(run.states.len(), 1);
        assert_eq!(run.states[0].t, 0.0);
        assert_eq!(run.states[0].u.samples(), u0.samples());
        assert_eq!(run.steps, 0);
    }

    #[test]
    fn exact_landing_with_partial_steps() {
        let g = GridSpec::new(20.0, 256).unwrap();
        let cfg = StepConfig {
            t_end: 0.1,
            dt: 0.003,
            ..StepConfig::default()
        };
        let u0 = Field::from_fn(g, sech).unwrap();
        let run = evolve(&u0, &cfg, &[0.0, 0.01, 0.0505, 0.1]).unwrap();
        let ts: Vec<f64> = run.states.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.01, 0.0505, 0.1]);
    }

    #[test]
    fn bad_sample_times_rejected() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let cfg = StepConfig {
            t_end: 0.1,
            ..StepConfig::default()
        };
        let u0 = Field::zeros(g);
        assert!(evolve(&u0, &cfg, &[0.05, 0.02]).is_err());
        assert!(evolve(&u0, &cfg, &[0.2]).is_err());
    }

    #[test]
    fn cfl_guard_aborts_with_last_good_state() {
        let g = GridSpec::new(10.0, 64).unwrap();
        let cfg = StepConfig {
            t_end: 1.0,
            dt: 0.5,
            ..StepConfig::default()
        };
        let u0 = Field::from_fn(g, sech).unwrap();
        let err = evolve(&u0, &cfg, &[]).unwrap_err();
        assert!(matches!(err.cause, Error::Cfl { .. }));
        assert_eq!(err.last_good.states.len(), 1);
        assert_eq!(err.last_good.states[0].t, 0.0);
    }

    #[test]
    fn initial_data_families() {
        let g = line_grid();
        let u = initial_data(&InitialData::default(), g, true).unwrap();
        let m = momentum(&u);
        let want = Field::from_fn(g, |x| 2.0 * sech(x).powi(3)).unwrap();
        assert!(m.max_diff(&want).unwrap() < 1e-9);

        let gm = InitialData::GaussianMomentum {
            amplitude: 1.0,
            width: 1.0,
        };
        let u = initial_data(&gm, g, true).unwrap();
        assert!(u.min() > -1e-15 && u.max() > 0.3);

        let ok = InitialData::ModePerturbation {
            amplitude: 1.0,
            width: 2.0,
            epsilon: 0.5,
            mode: 20,
        };
        assert!(initial_data(&ok, g, true).is_ok());
        let bad = InitialData::ModePerturbation {
            amplitude: 1.0,
            width: 2.0,
            epsilon: 1.5,
            mode: 20,
        };
        match initial_data(&bad, g, true) {
            Err(Error::NegativeMomentum { min }) => assert!(min < -0.01),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(initial_data(&bad, g, false).is_ok());
    }

    #[test]
    fn initial_data_from_file() {
        let g = GridSpec::new(30.0, 256).unwrap();
        let u = Field::from_fn(g, sech).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u0.csv");
        spectral::write_samples_csv(&u, std::fs::File::create(&path).unwrap()).unwrap();
        let back = initial_data(
            &InitialData::FromFile {
                path: path.to_string_lossy().into_owned(),
            },
            GridSpec::default(),
            true,
        )
        .unwrap();
        assert_eq!(back.grid(), &g);
        assert_eq!(back.samples(), u.samples());
    }
}

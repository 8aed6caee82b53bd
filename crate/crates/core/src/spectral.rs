//! Periodic pseudospectral foundation.
//!
//! The whole line is approximated by the torus `[-L, L)` sampled at `N`
//! uniform nodes `x_j = -L + j h`, `h = 2L/N`. Internally a field keeps the
//! discrete coefficients `c_k` with
//!
//! ```text
//! f(x_j) = sum_k c_k exp(i xi_k x_j),   xi_k = pi k / L,   k = -N/2 .. N/2-1
//! ```
//!
//! stored in FFT order (`k = 0, 1, .., N/2-1, -N/2, .., -1`). Fourier
//! multipliers act exactly on these coefficients. The whole-line transform
//! `u^(xi) = (2 pi)^{-1/2} int exp(-i x xi) u(x) dx` is recovered as
//! `u^(xi_k) ~ (2L / sqrt(2 pi)) c_k` and is only exposed through
//! [`transform`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order accepted by [`derivative`].
pub const DEFAULT_MAX_ORDER: usize = 16;

/// Relative magnitude below which a coefficient is treated as FFT roundoff by
/// the weighted norms (`|c_k| < SPECTRAL_NOISE_FLOOR * max |c|`).
pub const SPECTRAL_NOISE_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Uniform periodic grid on `[-L, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 40.0,
            n_points: 1024,
        }
    }
}

impl GridSpec {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        let grid = Self {
            half_width,
            n_points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must be positive, got {}",
                self.half_width
            )));
        }
        if self.n_points < 8 || !self.n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "number of points must be even and >= 8, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Signed mode number `k` of FFT-order slot `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n_points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT-order slot of mode `k`.
    pub fn slot(&self, k: i64) -> usize {
        let n = self.n_points as i64;
        k.rem_euclid(n) as usize
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        PI * self.mode(i) as f64 / self.half_width
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest resolved `|xi|` (the Nyquist wavenumber).
    pub fn xi_max(&self) -> f64 {
        PI * (self.n_points / 2) as f64 / self.half_width
    }

    /// Modes with `|k| <= dealias_cutoff()` survive the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n_points / 3
    }

    /// Factor converting discrete coefficients into samples of the line transform.
    pub fn line_factor(&self) -> f64 {
        2.0 * self.half_width / (2.0 * PI).sqrt()
    }

    fn nyquist_slot(&self) -> usize {
        self.n_points / 2
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("FFT plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

// Node x_0 = -L contributes exp(-i xi_k x_0) = (-1)^k, and (-1)^k = (-1)^i for
// FFT slot i because N is even.
fn sign(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn forward(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let (fwd, _) = plans(n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (i, c) in buf.iter_mut().enumerate() {
        *c *= sign(i) * scale;
    }
    buf
}

fn inverse(spectrum: &[Complex64]) -> Vec<f64> {
    let n = spectrum.len();
    let (_, inv) = plans(n);
    let mut buf: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(i, c)| c * sign(i))
        .collect();
    inv.process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Real field sampled on a periodic grid, with a lazily computed spectrum.
///
/// At least one of the two representations is always present; the other is
/// computed on first use. Fields are immutable once built.
#[derive(Debug, Clone)]
pub struct Field {
    grid: GridSpec,
    samples: OnceLock<Vec<f64>>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Field {
    pub fn from_samples(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.n_points {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n_points,
                samples.len()
            )));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidField { index, value });
        }
        Ok(Self {
            grid,
            samples: OnceLock::from(samples),
            spectrum: OnceLock::new(),
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = grid.nodes().into_iter().map(f).collect();
        Self::from_samples(grid, samples)
    }

    /// Builds a field from FFT-ordered coefficients. The coefficients must be
    /// conjugate-symmetric for the field to be real; the imaginary part of the
    /// synthesized samples is discarded.
    pub fn from_spectrum(grid: GridSpec, spectrum: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if spectrum.len() != grid.n_points {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.n_points,
                spectrum.len()
            )));
        }
        if let Some((index, c)) = spectrum
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::InvalidField {
                index,
                value: c.norm(),
            });
        }
        Ok(Self::from_spectrum_unchecked(grid, spectrum))
    }

    pub(crate) fn from_spectrum_unchecked(grid: GridSpec, spectrum: Vec<Complex64>) -> Self {
        Self {
            grid,
            samples: OnceLock::new(),
            spectrum: OnceLock::from(spectrum),
        }
    }

    pub(crate) fn from_samples_unchecked(grid: GridSpec, samples: Vec<f64>) -> Self {
        Self {
            grid,
            samples: OnceLock::from(samples),
            spectrum: OnceLock::new(),
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_samples_unchecked(grid, vec![0.0; grid.n_points])
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self::from_samples_unchecked(grid, vec![value; grid.n_points])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        self.samples.get_or_init(|| {
            inverse(self.spectrum.get().expect("field has neither representation"))
        })
    }

    /// Discrete coefficients `c_k` in FFT order.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            forward(self.samples.get().expect("field has neither representation"))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.samples().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.samples().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.samples().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Max-norm distance to another field on the same grid.
    pub fn max_diff(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .samples()
            .iter()
            .zip(other.samples())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise map of the samples (no dealiasing).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_samples_unchecked(self.grid, self.samples().iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, a: f64) -> Field {
        if let Some(spec) = self.spectrum.get() {
            return Field::from_spectrum_unchecked(self.grid, spec.iter().map(|c| c * a).collect());
        }
        self.map(|v| a * v)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field::from_samples_unchecked(
            self.grid,
            self.samples()
                .iter()
                .zip(other.samples())
                .map(|(x, y)| x + a * y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// The field rebuilt from [`Field::cleaned_spectrum`].
    pub fn denoised(&self) -> Field {
        Field::from_spectrum_unchecked(self.grid, self.cleaned_spectrum())
    }

    /// Spectral coefficients with FFT roundoff zeroed (see [`SPECTRAL_NOISE_FLOOR`]).
    pub fn cleaned_spectrum(&self) -> Vec<Complex64> {
        let spec = self.spectrum();
        let peak = spec.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let floor = SPECTRAL_NOISE_FLOOR * peak;
        spec.iter()
            .map(|&c| if c.norm() < floor { Complex64::new(0.0, 0.0) } else { c })
            .collect()
    }
}

/// Largest `|k|` whose coefficient clears the noise floor of [`Field::cleaned_spectrum`].
pub fn resolved_band(f: &Field) -> usize {
    let grid = *f.grid();
    f.cleaned_spectrum()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(i, _)| grid.mode(i).unsigned_abs() as usize)
        .max()
        .unwrap_or(0)
}

/// Zeroes every mode with `|k| > cut`.
pub fn lowpass(f: &Field, cut: usize) -> Field {
    let grid = *f.grid();
    let out = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if grid.mode(i).unsigned_abs() as usize > cut {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
        .collect();
    Field::from_spectrum_unchecked(grid, out)
}

/// Line-transform view of a field, ordered by `k = -N/2 .. N/2-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSpectrum {
    pub modes: Vec<i64>,
    pub wavenumbers: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl LineSpectrum {
    /// Value at mode `k`, if present.
    pub fn at(&self, k: i64) -> Option<Complex64> {
        let half = (self.modes.len() / 2) as i64;
        let idx = k + half;
        (0..self.modes.len() as i64)
            .contains(&idx)
            .then(|| self.values[idx as usize])
    }
}

/// Samples of the whole-line Fourier transform `u^(xi_k)`.
pub fn transform(f: &Field) -> LineSpectrum {
    let grid = *f.grid();
    let n = grid.n_points;
    let factor = grid.line_factor();
    let spec = f.spectrum();
    let half = (n / 2) as i64;
    let modes: Vec<i64> = (-half..half).collect();
    let wavenumbers = modes
        .iter()
        .map(|&k| PI * k as f64 / grid.half_width)
        .collect();
    let values = modes.iter().map(|&k| spec[grid.slot(k)] * factor).collect();
    LineSpectrum {
        modes,
        wavenumbers,
        values,
    }
}

/// Applies a Fourier multiplier `m(xi)`. If `odd` the Nyquist mode, which has
/// no conjugate partner, is zeroed to keep the field real.
pub fn apply_multiplier(f: &Field, odd: bool, m: impl Fn(f64) -> Complex64) -> Field {
    let grid = *f.grid();
    let mut out: Vec<Complex64> = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, c)| c * m(grid.wavenumber(i)))
        .collect();
    if odd {
        out[grid.nyquist_slot()] = Complex64::new(0.0, 0.0);
    }
    Field::from_spectrum_unchecked(grid, out)
}

/// `d^order f / dx^order`, orders up to [`DEFAULT_MAX_ORDER`].
pub fn derivative(f: &Field, order: usize) -> Result<Field> {
    derivative_with_max(f, order, DEFAULT_MAX_ORDER)
}

pub fn derivative_with_max(f: &Field, order: usize, max_order: usize) -> Result<Field> {
    if order > max_order {
        return Err(Error::UnsupportedOrder {
            order,
            max: max_order,
        });
    }
    if order == 0 {
        return Ok(f.clone());
    }
    let i_pow = Complex64::i().powu(order as u32);
    Ok(apply_multiplier(f, order % 2 == 1, |xi| {
        i_pow * xi.powi(order as i32)
    }))
}

/// `Lambda^{-2} f = (1 - d_x^2)^{-1} f`, the multiplier `1/(1 + xi^2)`.
pub fn helmholtz_inverse(f: &Field) -> Field {
    apply_multiplier(f, false, |xi| Complex64::new(1.0 / (1.0 + xi * xi), 0.0))
}

/// Zeroes every mode with `|k| > N/3`.
pub fn dealias(f: &Field) -> Field {
    let grid = *f.grid();
    let cut = grid.dealias_cutoff() as i64;
    let out = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if grid.mode(i).abs() > cut {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
        .collect();
    Field::from_spectrum_unchecked(grid, out)
}

/// Product with the 2/3 rule: both factors and the result are truncated to
/// `|k| <= N/3`, which removes every aliased quadratic interaction.
pub fn product(f: &Field, g: &Field) -> Result<Field> {
    f.check_grid(g)?;
    let fd = dealias(f);
    let gd = dealias(g);
    let raw = Field::from_samples_unchecked(
        *f.grid(),
        fd.samples()
            .iter()
            .zip(gd.samples())
            .map(|(a, b)| a * b)
            .collect(),
    );
    Ok(dealias(&raw))
}

/// Dealiased square, `product(f, f)` with one truncation saved.
pub fn square(f: &Field) -> Field {
    let fd = dealias(f);
    let raw = Field::from_samples_unchecked(*f.grid(), fd.samples().iter().map(|a| a * a).collect());
    dealias(&raw)
}

/// Rectangle rule `h * sum f(x_j)`; spectrally accurate for smooth periodic data.
pub fn integrate(f: &Field) -> f64 {
    f.grid().spacing() * f.samples().iter().sum::<f64>()
}

/// `h * sum |f(x_j)|`.
pub fn integrate_abs(f: &Field) -> f64 {
    f.grid().spacing() * f.samples().iter().map(|v| v.abs()).sum::<f64>()
}

/// Fraction of spectral energy carried by the modes with `|k| > N/3`.
pub fn tail_fraction(f: &Field) -> f64 {
    band_fraction(f, f.grid().dealias_cutoff() as i64)
}

/// Fraction of spectral energy carried by the modes with `|k| > cut`.
pub fn band_fraction(f: &Field, cut: i64) -> f64 {
    let grid = *f.grid();
    let (mut tail, mut total) = (0.0, 0.0);
    for (i, c) in f.spectrum().iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        if grid.mode(i).abs() > cut {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Fraction of `int f^2` outside `|x| <= L/2`; the torus stands in for the
/// line only while this stays tiny.
pub fn outer_mass_fraction(f: &Field) -> f64 {
    let grid = *f.grid();
    let (mut outer, mut total) = (0.0, 0.0);
    for (j, v) in f.samples().iter().enumerate() {
        let e = v * v;
        total += e;
        if grid.node(j).abs() > 0.5 * grid.half_width {
            outer += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `x,value` rows.
pub fn write_samples_csv<W: Write>(f: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (j, v) in f.samples().iter().enumerate() {
        w.write_record([fmt_f64(f.grid().node(j)), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the line spectrum as `k,re,im` rows.
pub fn write_spectrum_csv<W: Write>(f: &Field, out: W) -> Result<()> {
    let spec = transform(f);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "re", "im"])?;
    for (k, c) in spec.modes.iter().zip(&spec.values) {
        w.write_record([k.to_string(), fmt_f64(c.re), fmt_f64(c.im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,value` rows; the grid is inferred from the nodes.
pub fn read_samples_csv<R: Read>(input: R) -> Result<Field> {
    let mut r = csv::Reader::from_reader(input);
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidGrid(format!("row {}: bad column {}", line + 2, i)))
        };
        xs.push(parse(0)?);
        vs.push(parse(1)?);
    }
    if xs.len() < 2 {
        return Err(Error::InvalidGrid("field file has fewer than two rows".into()));
    }
    let h = xs[1] - xs[0];
    let grid = GridSpec::new(0.5 * h * xs.len() as f64, xs.len())?;
    for (j, x) in xs.iter().enumerate() {
        if (x - grid.node(j)).abs() > 1e-9 * grid.half_width.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "node {j} at {x} does not match the uniform grid on [-L, L)"
            )));
        }
    }
    Field::from_samples(grid, vs)
}

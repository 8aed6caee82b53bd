//! Seeded random band-limited fields for the inequality suites.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{Field, GridSpec};

/// Grid used by the random suites: `xi_k = k/4`, Nyquist at `xi = 16`.
pub fn corpus_grid() -> GridSpec {
    GridSpec {
        half_width: 4.0 * std::f64::consts::PI,
        n_points: 128,
    }
}

/// One random trigonometric polynomial with modes `|k| <= max_mode`.
///
/// Coefficients are uniform in the unit square, damped by `exp(-decay k)`, and
/// the whole field is rescaled so that `max |u|` equals `amplitude`.
pub fn band_limited<R: Rng>(rng: &mut R, grid: GridSpec, max_mode: usize, amplitude: f64) -> Field {
    let n = grid.n_points;
    let max_mode = max_mode.min(n / 2 - 1);
    let decay = rng.random_range(0.05..0.4);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    spec[0] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
    for k in 1..=max_mode {
        let damp = (-decay * k as f64).exp();
        let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * damp;
        spec[grid.slot(k as i64)] = c;
        spec[grid.slot(-(k as i64))] = c.conj();
    }
    let raw = Field::from_spectrum_unchecked(grid, spec);
    let peak = raw.max_abs();
    if peak == 0.0 {
        return raw;
    }
    raw.scale(amplitude / peak)
}

/// `count` fields from a fixed seed. Each field draws its band from
/// `4..=max_mode` and its amplitude from `[0.05, 2]`.
pub fn random_corpus(seed: u64, count: usize, grid: GridSpec, max_mode: usize) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let band = rng.random_range(4..=max_mode.max(4));
            let amp = rng.random_range(0.05..2.0);
            band_limited(&mut rng, grid, band, amp)
        })
        .collect()
}

/// Corpus whose pairwise products stay inside the 2/3 band (`|k| <= N/6`).
pub fn product_safe_corpus(seed: u64, count: usize) -> Vec<Field> {
    let grid = corpus_grid();
    random_corpus(seed, count, grid, grid.n_points / 6)
}

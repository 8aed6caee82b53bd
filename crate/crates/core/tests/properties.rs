//! Randomised invariants over band-limited fields.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use novikov::corpus::{band_limited, corpus_grid};
use novikov::evolution::rhs;
use novikov::geometry::{genericity_indicator, metric, one_forms, PSSParams};
use novikov::norms::{gevrey_norm, km_norm, operator_inequality_suite, GevreyParams, KMParams};
use novikov::spectral::{derivative, helmholtz_inverse, integrate};
use novikov::taylor::lifespan_aot;
use novikov::tracker::{lower_bound_r, radius_from_spectrum, BoundConstants, DEFAULT_FIT_FLOOR};
use novikov::{Field, GridSpec};

/// A random field whose pairwise products stay inside the dealiased band.
fn field() -> impl Strategy<Value = Field> {
    (any::<u64>(), 2usize..=21, 0.05f64..2.0).prop_map(|(seed, band, amp)| {
        band_limited(&mut ChaCha8Rng::seed_from_u64(seed), corpus_grid(), band, amp)
    })
}

fn pss_params() -> impl Strategy<Value = PSSParams> {
    (prop_oneof![Just(0.0), Just(1.0), Just(3.0), -2.0f64..2.0], prop_oneof![Just(-2), Just(1)], prop_oneof![Just(1), Just(-1)])
        .prop_map(|(mu_metric, m1, sign)| PSSParams { mu_metric, m1, sign })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(f in field()) {
        let grid = *f.grid();
        let energy = integrate(&f.map(|v| v * v));
        let spectral: f64 = 2.0 * grid.half_width * f.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>();
        prop_assert!(rel(energy, spectral) <= 1e-10);
    }

    #[test]
    fn samples_survive_the_spectral_round_trip(f in field()) {
        let back = Field::from_spectrum(*f.grid(), f.spectrum().to_vec()).unwrap();
        prop_assert!(back.max_diff(&f).unwrap() <= 1e-12 * f.max_abs());
    }

    #[test]
    fn derivatives_compose(f in field()) {
        let twice = derivative(&derivative(&f, 1).unwrap(), 1).unwrap();
        let direct = derivative(&f, 2).unwrap();
        prop_assert!(twice.max_diff(&direct).unwrap() <= 1e-11 * (1.0 + direct.max_abs()));
    }

    #[test]
    fn helmholtz_inverse_is_linear(f in field(), g in field(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let combined = helmholtz_inverse(&f.scale(a).axpy(b, &g).unwrap());
        let separate = helmholtz_inverse(&f).scale(a).axpy(b, &helmholtz_inverse(&g)).unwrap();
        let scale = 1.0 + f.max_abs() * a.abs() + g.max_abs() * b.abs();
        prop_assert!(combined.max_diff(&separate).unwrap() <= 1e-13 * scale);
    }

    #[test]
    fn gevrey_norm_grows_with_both_indices(
        f in field(),
        sigma in 0.05f64..1.0,
        dsigma in 0.0f64..0.5,
        s in 0.0f64..3.0,
        ds in 0.0f64..2.0,
    ) {
        let base = gevrey_norm(&f, GevreyParams { sigma, s }).value;
        let wider = gevrey_norm(&f, GevreyParams { sigma: sigma + dsigma, s }).value;
        let smoother = gevrey_norm(&f, GevreyParams { sigma, s: s + ds }).value;
        prop_assert!(base <= wider * (1.0 + 1e-14));
        prop_assert!(base <= smoother * (1.0 + 1e-14));
    }

    #[test]
    fn truncated_km_norm_grows_with_order(f in field(), sigma in -1.0f64..-0.1, m in 0usize..12) {
        let lo = km_norm(&f, KMParams::new(sigma, m));
        let hi = km_norm(&f, KMParams::new(sigma, m + 1));
        prop_assert!(lo <= hi * (1.0 + 1e-14));
    }

    #[test]
    fn operator_inequalities_hold(
        f in field(),
        g in field(),
        sigma in 0.1f64..1.0,
        frac in 0.05f64..0.95,
        s in 0.0f64..3.0,
    ) {
        for check in operator_inequality_suite(&f, &g, sigma, frac * sigma, s).unwrap() {
            prop_assert!(check.pass, "{} lhs {} rhs {}", check.name, check.lhs, check.rhs);
        }
    }

    #[test]
    fn constants_are_equilibria(c in -3.0f64..3.0) {
        let u = Field::constant(corpus_grid(), c);
        prop_assert!(rhs(&u).unwrap().max_abs() <= 1e-13 * (1.0 + c * c));
    }

    #[test]
    fn metric_determinant_is_the_squared_indicator(f in field(), p in pss_params()) {
        let u = f.map(|v| v + 2.5);
        let forms = one_forms(&u, p).unwrap();
        let g = metric(&forms).unwrap();
        let ind = genericity_indicator(&forms);
        let scale = g.e.iter().zip(&g.g).map(|(e, gg)| e * gg).fold(0.0, f64::max);
        for (det, i) in g.det.iter().zip(&ind) {
            prop_assert!((det - i * i).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn radius_estimate_ignores_amplitude(r0 in 0.3f64..1.5, wobble in any::<u64>(), factor in 0.1f64..10.0) {
        let g = GridSpec::new(40.0, 1024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(wobble);
        let jitter: Vec<f64> = (0..g.n_points / 2).map(|_| 1.0 + 0.2 * rng.random_range(-1.0..1.0)).collect();
        // even in the mode index, so the field is real; the unpaired Nyquist mode stays zero
        let full: Vec<Complex64> = (0..g.n_points)
            .map(|i| match g.mode(i).unsigned_abs() as usize {
                k if k == g.n_points / 2 => Complex64::new(0.0, 0.0),
                k => Complex64::new(jitter[k] * (-r0 * g.wavenumber(i).abs()).exp(), 0.0),
            })
            .collect();
        let u = Field::from_spectrum(g, full).unwrap();
        let a = radius_from_spectrum(&u, DEFAULT_FIT_FLOOR).unwrap();
        let b = radius_from_spectrum(&u.scale(factor), DEFAULT_FIT_FLOOR).unwrap();
        prop_assert!(rel(a.r_measured, b.r_measured) <= 1e-9);
        prop_assert!(rel(a.r_measured, r0) <= 0.05);
    }

    #[test]
    fn bound_constants_order(norm in 0.0f64..5.0, sigma0 in -2.0f64..-1e-3, mu in 1.0f64..10.0, t in 0.0f64..0.05) {
        let c = BoundConstants::from_norm(norm, sigma0, mu).unwrap();
        prop_assert!(c.a <= c.l1);
        prop_assert!(c.b == c.l2 && c.b > 0.0 && c.l3 > 0.0);
        // log of L3 exp(-L1 exp(L2 t)) never exceeds sigma0 and decreases in t
        let lb = lower_bound_r(&c, t).log;
        prop_assert!(lb <= sigma0 + 1e-12);
        prop_assert!(lower_bound_r(&c, t + 0.01).log <= lb);
    }

    #[test]
    fn lifespan_shrinks_with_constant_and_norm(n in 0.01f64..10.0, r in 0.01f64..10.0, c in 0.01f64..10.0, k in 1.01f64..4.0) {
        let base = lifespan_aot(n, r, c).unwrap();
        let e = std::f64::consts::E;
        prop_assert!(rel(base.m, 3.0 * c * n * n / e) <= 1e-15);
        prop_assert!(rel(base.l, 6.0 * c * (r + n) / e) <= 1e-15);
        prop_assert!(lifespan_aot(n, r, k * c).unwrap().t_aot < base.t_aot);
        prop_assert!(lifespan_aot(k * n, r, c).unwrap().t_aot < base.t_aot);
        prop_assert!(lifespan_aot(k * n, r, c).unwrap().t_thm22 < base.t_thm22);
    }
}

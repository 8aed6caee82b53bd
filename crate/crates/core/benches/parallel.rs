//! Sequential against rayon-parallel execution of the batch workloads.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use novikov::corpus::product_safe_corpus;
use novikov::evolution::{evolve, StepConfig};
use novikov::geometry::{self, PSSParams, DEFAULT_GENERICITY_THRESHOLD};
use novikov::norms::operator_inequality_suite;
use novikov::par;
use novikov::tracker::{bound_constants, track};
use novikov::{Exec, Field, GridSpec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn norm_suite(c: &mut Criterion) {
    let fields = product_safe_corpus(42, 200);
    let mut group = c.benchmark_group("norm_suite_200_fields");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::map_range(exec, fields.len(), |i| {
                    let g = &fields[(i + 1) % fields.len()];
                    operator_inequality_suite(&fields[i], g, 0.8, 0.4, 2.0).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn post_processing(c: &mut Criterion) {
    let u0 = Field::from_fn(GridSpec::new(40.0, 1024).unwrap(), |x| 1.0 / x.cosh()).unwrap();
    let h = 2e-3;
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * h).collect();
    let cfg = StepConfig { dt: 1e-3, t_end: 0.2, ..StepConfig::default() };
    let run = evolve(&u0, &cfg, &times).unwrap();
    let bounds = bound_constants(&u0, -0.1, 1.0 + run.max_u_h2).unwrap();
    let p = PSSParams::default();
    let series: Vec<_> = run
        .states
        .iter()
        .map(|s| (s.t, geometry::metric(&geometry::one_forms(&s.u, p).unwrap()).unwrap()))
        .collect();

    let mut group = c.benchmark_group("post_processing_101_states");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("radius_tracking", name), |b| {
            b.iter(|| track(black_box(&run.states), &bounds, exec))
        });
        group.bench_function(BenchmarkId::new("curvature", name), |b| {
            b.iter(|| geometry::gaussian_curvature(black_box(&series), h, DEFAULT_GENERICITY_THRESHOLD, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, norm_suite, post_processing);
criterion_main!(benches);

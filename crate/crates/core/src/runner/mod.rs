//! Subcommand pipelines: each one writes its CSVs and a JSON manifest into
//! `out_dir` and reports a pass/fail/abort status.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

pub use config::{parse_config, CsSetting, InitialKind, RunConfig};

use crate::corpus;
use crate::error::{Error, Result};
use crate::evolution::{self, EvolutionRun, EvolutionState, GuardEvent, StepConfig};
use crate::geometry::{self, MetricSample};
use crate::norms::{self, GevreyParams, InequalityCheck, KMParams};
use crate::par::{self, Exec};
use crate::spectral::{self, Field};
use crate::taylor;
use crate::tracker::{self, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Evolve,
    AnalyzeRadius,
    TaylorCompare,
    GeometryCheck,
    NormCheck,
    Lifespan,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Evolve,
        Subcommand::AnalyzeRadius,
        Subcommand::TaylorCompare,
        Subcommand::GeometryCheck,
        Subcommand::NormCheck,
        Subcommand::Lifespan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Evolve => "evolve",
            Subcommand::AnalyzeRadius => "analyze-radius",
            Subcommand::TaylorCompare => "taylor-compare",
            Subcommand::GeometryCheck => "geometry-check",
            Subcommand::NormCheck => "norm-check",
            Subcommand::Lifespan => "lifespan",
        }
    }
}

/// Outcome class; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Abort,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Abort => 2,
        }
    }

    fn worst(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Abort, _) | (_, Abort) => Abort,
            (Fail, _) | (_, Fail) => Fail,
            _ => Pass,
        }
    }
}

/// Where the algebra constant came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsProvenance {
    pub c_s: f64,
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement: Option<norms::MeasuredCs>,
}

/// Everything needed to reproduce a run, plus what it derived.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub code_version: &'static str,
    pub parallel: bool,
    pub config: RunConfig,
    /// The same config in its normalised text form, ready to rerun.
    pub config_text: String,
    pub grid_spacing: f64,
    pub sample_times: Vec<f64>,
    pub derived: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_s: Option<CsProvenance>,
    pub events: Vec<GuardEvent>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub outputs: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    pub manifest: RunManifest,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    exec: Exec,
    out: PathBuf,
    outputs: Vec<PathBuf>,
    summary: Vec<String>,
    derived: BTreeMap<String, Value>,
    c_s: Option<CsProvenance>,
    events: Vec<GuardEvent>,
    abort: Option<String>,
    sample_times: Vec<f64>,
}

impl Ctx<'_> {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.out.join(name);
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    fn derive(&mut self, key: &str, value: impl Serialize) {
        self.derived
            .insert(key.into(), serde_json::to_value(value).expect("plain data"));
    }

    fn say(&mut self, line: String) {
        self.summary.push(line);
    }

    fn resolve_cs(&mut self) -> Result<f64> {
        let prov = match self.cfg.c_s {
            CsSetting::Value(v) => CsProvenance {
                c_s: v,
                source: "config",
                measurement: None,
            },
            CsSetting::Measured => {
                let fields = corpus::product_safe_corpus(self.cfg.seed, self.cfg.corpus_size);
                let p = GevreyParams::new(1.0, self.cfg.gevrey_s)?;
                let m = norms::measure_algebra_constant(&fields, p, self.exec)?;
                CsProvenance {
                    c_s: m.c_s,
                    source: "measured",
                    measurement: Some(m),
                }
            }
        };
        let c = prov.c_s;
        self.c_s = Some(prov);
        Ok(c)
    }

    fn initial(&self, require_positive: bool) -> Result<Field> {
        let grid = self.cfg.grid()?;
        evolution::initial_data(&self.cfg.initial_data(), grid, require_positive)
    }

    /// Runs the evolution; a guard abort is recorded and the partial run kept.
    fn evolve(&mut self, u0: &Field, step: &StepConfig, times: &[f64]) -> EvolutionRun {
        match evolution::evolve(u0, step, times) {
            Ok(run) => {
                self.events.extend(run.events.iter().cloned());
                run
            }
            Err(aborted) => {
                let aborted = *aborted;
                self.events.extend(aborted.last_good.events.iter().cloned());
                self.abort = Some(aborted.cause.to_string());
                self.say(format!("guard abort: {}", aborted.cause));
                aborted.last_good
            }
        }
    }
}

/// Shortest round-trip form; exponent notation outside [1e-4, 1e6).
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Runs one subcommand against a validated config.
pub fn run(cfg: &RunConfig, cmd: Subcommand, exec: Exec) -> Result<Outcome> {
    cfg.validate()?;
    let started = Instant::now();
    let out = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out)?;
    let mut ctx = Ctx {
        cfg,
        exec,
        out,
        outputs: Vec::new(),
        summary: Vec::new(),
        derived: BTreeMap::new(),
        c_s: None,
        events: Vec::new(),
        abort: None,
        sample_times: cfg.resolved_sample_times(),
    };
    let status = match cmd {
        Subcommand::Evolve => evolve_cmd(&mut ctx)?,
        Subcommand::AnalyzeRadius => analyze_radius(&mut ctx)?,
        Subcommand::TaylorCompare => taylor_compare(&mut ctx)?,
        Subcommand::GeometryCheck => geometry_check(&mut ctx)?,
        Subcommand::NormCheck => norm_check(&mut ctx)?,
        Subcommand::Lifespan => lifespan(&mut ctx)?,
    };
    let status = if ctx.abort.is_some() {
        status.worst(Status::Abort)
    } else {
        status
    };
    let manifest_path = ctx.out.join("manifest.json");
    let mut outputs: Vec<String> = ctx
        .outputs
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        subcommand: cmd.name(),
        code_version: env!("CARGO_PKG_VERSION"),
        parallel: exec.is_parallel(),
        config: cfg.clone(),
        config_text: cfg.to_toml(),
        grid_spacing: cfg.grid()?.spacing(),
        sample_times: ctx.sample_times.clone(),
        derived: ctx.derived,
        c_s: ctx.c_s,
        events: ctx.events,
        status,
        abort: ctx.abort,
        outputs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut w = BufWriter::new(File::create(&manifest_path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    ctx.outputs.push(manifest_path);
    let mut summary = ctx.summary;
    summary.push(format!("status: {:?}", status).to_lowercase());
    Ok(Outcome {
        status,
        outputs: ctx.outputs,
        summary,
        manifest,
    })
}

fn evolve_cmd(ctx: &mut Ctx) -> Result<Status> {
    let u0 = ctx.initial(false)?;
    let times = ctx.sample_times.clone();
    let run = ctx.evolve(&u0, &ctx.cfg.step(), &times);
    let rows: Vec<Vec<String>> = run
        .states
        .iter()
        .map(|s| {
            let d = &s.diag;
            vec![
                num(s.t),
                num(d.m_l1),
                num(d.u_l1),
                num(d.u_h2),
                num(d.u_hs),
                num(d.min_m),
                num(d.min_u),
                num(d.energy_tail),
            ]
        })
        .collect();
    ctx.csv(
        "evolve.csv",
        &["t", "m_l1", "u_l1", "u_h2", "u_hs", "min_m", "min_u", "energy_tail"],
        &rows,
    )?;
    if ctx.cfg.snapshots {
        for (i, s) in run.states.iter().enumerate() {
            let path = ctx.out.join(format!("snapshot_{i:04}.csv"));
            spectral::write_samples_csv(&s.u, BufWriter::new(File::create(&path)?))?;
            ctx.outputs.push(path);
        }
    }
    ctx.derive("steps", run.steps);
    ctx.derive("max_u_h2", run.max_u_h2);
    if let Some(last) = run.states.last() {
        ctx.say(format!(
            "t = {}: m_l1 = {}, min m = {:e}",
            last.t, last.diag.m_l1, last.diag.min_m
        ));
    }
    Ok(Status::Pass)
}

fn analyze_radius(ctx: &mut Ctx) -> Result<Status> {
    let u0 = ctx.initial(true)?;
    let times = ctx.sample_times.clone();
    let run = ctx.evolve(&u0, &ctx.cfg.step(), &times);
    // two passes: the bound needs the run's largest H^2 norm
    let mu_bound = 1.0 + run.max_u_h2;
    let c = tracker::bound_constants(&u0, ctx.cfg.sigma0, mu_bound)?;
    ctx.derive("bound_constants", c);
    let rows = tracker::track(&run.states, &c, ctx.exec);
    let mut status = Status::Pass;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            if r.verdict == Verdict::Fail {
                status = Status::Fail;
            }
            let (rm, r2) = r
                .estimate
                .map(|e| (num(e.r_measured), num(e.fit_r2)))
                .unwrap_or_default();
            vec![
                num(r.t),
                rm,
                r2,
                num(r.sigma_t),
                num(r.log_lower_bound),
                r.verdict.as_str().into(),
            ]
        })
        .collect();
    ctx.csv(
        "radius.csv",
        &["t", "r_measured", "fit_r2", "sigma_t", "log_lower_bound", "pass"],
        &table,
    )?;
    let early: Vec<EvolutionState> = run
        .states
        .iter()
        .filter(|s| s.t <= ctx.cfg.phi_t_max)
        .cloned()
        .collect();
    let phi = tracker::phi_rho_check(&early, &c, ctx.exec);
    if phi.iter().any(|p| !p.pass) {
        status = Status::Fail;
    }
    let phi_rows: Vec<Vec<String>> = phi
        .iter()
        .map(|p| vec![num(p.t), num(p.phi), num(p.rho), p.pass.to_string()])
        .collect();
    ctx.csv("phi_rho.csv", &["t", "phi", "rho", "pass"], &phi_rows)?;
    let flagged = rows.iter().filter(|r| r.verdict == Verdict::Flagged).count();
    ctx.say(format!(
        "{} samples, {} below the bound, {} flagged; mu_bound = {mu_bound}",
        rows.len(),
        rows.iter().filter(|r| r.verdict == Verdict::Fail).count(),
        flagged
    ));
    Ok(status)
}

/// `||u0||_{G^{1,s}}`, from the config override when given.
fn u0_gevrey_one(ctx: &mut Ctx, u0: Option<&Field>) -> Result<(f64, bool)> {
    if let Some(v) = ctx.cfg.u0_gnorm {
        return Ok((v, false));
    }
    let owned;
    let u0 = match u0 {
        Some(u) => u,
        None => {
            owned = ctx.initial(false)?;
            &owned
        }
    };
    let g = norms::gevrey_norm(u0, GevreyParams::new(1.0, ctx.cfg.gevrey_s)?);
    ctx.derive("u0_gevrey_1s", g);
    Ok((g.value, g.unresolved))
}

fn lifespan_report(ctx: &mut Ctx, u0: Option<&Field>) -> Result<taylor::LifespanReport> {
    let c_s = ctx.resolve_cs()?;
    let (gnorm, unresolved) = u0_gevrey_one(ctx, u0)?;
    let r = ctx.cfg.lifespan_r.unwrap_or(gnorm);
    let mut report = taylor::lifespan_aot(gnorm, r, c_s)?;
    report.u0_gnorm_unresolved = unresolved;
    Ok(report)
}

fn taylor_compare(ctx: &mut Ctx) -> Result<Status> {
    let u0 = ctx.initial(false)?;
    let series =
        taylor::taylor_coefficients_with(&u0, ctx.cfg.taylor_order, taylor::DEFAULT_EDGE_GUARD, ctx.exec)?;
    let coeff_rows: Vec<Vec<String>> = series
        .h2_norms
        .iter()
        .enumerate()
        .map(|(k, n)| vec![k.to_string(), num(*n)])
        .collect();
    ctx.csv("taylor_coefficients.csv", &["k", "coeff_h2norm"], &coeff_rows)?;
    ctx.derive("taylor_order_used", series.order());
    ctx.derive("taylor_warnings", &series.warnings);
    for w in &series.warnings {
        ctx.say(format!("taylor: {w}"));
    }
    let radius = match taylor::convergence_radius_estimate(&series) {
        Ok(fit) => {
            ctx.derive("radius_fit", fit);
            if fit.infinite {
                f64::INFINITY
            } else {
                fit.radius
            }
        }
        Err(e) => {
            ctx.say(format!("radius fit unavailable: {e}"));
            f64::INFINITY
        }
    };
    let report = lifespan_report(ctx, Some(&u0))?;
    ctx.json("lifespan.json", &report)?;
    let t_max = 0.5 * radius.min(0.5 * report.t_thm22);
    ctx.derive("compare_t_max", t_max);
    let n = ctx.cfg.taylor_points;
    let times: Vec<f64> = (1..=n).map(|i| t_max * i as f64 / n as f64).collect();
    let step = StepConfig {
        t_end: t_max,
        ..ctx.cfg.step()
    };
    let run = ctx.evolve(&u0, &step, &times);
    let mut status = Status::Pass;
    let mut worst = 0.0_f64;
    let rows: Vec<Vec<String>> = run
        .states
        .iter()
        .map(|s| {
            let diff = taylor::taylor_eval(&series, s.t)
                .max_diff(&s.u)
                .expect("same grid");
            worst = worst.max(diff);
            if !(diff <= ctx.cfg.taylor_tol) {
                status = Status::Fail;
            }
            vec![num(s.t), num(diff)]
        })
        .collect();
    ctx.csv("taylor_vs_rk4.csv", &["t", "taylor_vs_rk4_maxdiff"], &rows)?;
    ctx.say(format!(
        "order {} series vs RK4 on (0, {t_max:.6e}]: max diff {worst:e}",
        series.order()
    ));
    Ok(status)
}

fn geometry_check(ctx: &mut Ctx) -> Result<Status> {
    let cfg = ctx.cfg;
    let p = cfg.pss()?;
    let h = cfg.curvature_dt;
    let u0 = ctx.initial(false)?;
    let requested = if ctx.sample_times.is_empty() {
        vec![cfg.t_end]
    } else {
        ctx.sample_times.clone()
    };
    // the curvature stencil needs two snapshots on each side of a centre
    let (centres, skipped): (Vec<f64>, Vec<f64>) = requested.iter().partition(|&&t| t >= 2.0 * h - 1e-12);
    ctx.derive("skipped_sample_times", &skipped);
    ctx.sample_times = centres.clone();
    if centres.is_empty() {
        return Err(Error::ConfigField {
            field: "sample_times".into(),
            message: format!("geometry-check needs sample times >= 2 * curvature_dt = {}", 2.0 * h),
        });
    }
    let mut times: Vec<f64> = centres
        .iter()
        .flat_map(|&c| (0..5).map(move |i| c + (i as f64 - 2.0) * h))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let horizon = *times.last().expect("nonempty");
    ctx.derive("run_horizon", horizon);
    let step = StepConfig {
        t_end: cfg.t_end.max(horizon),
        ..cfg.step()
    };
    let run = ctx.evolve(&u0, &step, &times);
    let find = |t: f64| run.states.iter().position(|s| (s.t - t).abs() < 1e-9);
    let mut status = Status::Pass;
    let mut rows = Vec::new();
    let mut flow_k = Vec::new();
    for (idx, &c) in centres.iter().enumerate() {
        let Some(slots) = (0..5)
            .map(|i| find(c + (i as f64 - 2.0) * h))
            .collect::<Option<Vec<usize>>>()
        else {
            break;
        };
        let series: Vec<(f64, MetricSample)> = par::map(ctx.exec, &slots, |&j| {
            let s = &run.states[j];
            geometry::one_forms(&s.u, p)
                .and_then(|f| geometry::metric(&f))
                .map(|m| (s.t, m))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let slice = geometry::gaussian_curvature(&series, h, cfg.genericity_threshold, ctx.exec)?
            .into_iter()
            .next()
            .expect("five samples give one slice");
        let centre = &run.states[slots[2]].u;
        let flow = geometry::curvature_from_flow(centre, c, p, cfg.genericity_threshold)?;
        flow_k.push((c, flow.max_abs_k_plus_1));
        let residual = match geometry::zero_curvature_residual(centre, p) {
            Ok(r) => Some(r),
            Err(Error::InvalidParameter(_)) => None,
            Err(e) => return Err(e),
        };
        let ok = residual.is_none_or(|r| r <= cfg.residual_tol) && slice.max_abs_k_plus_1 <= cfg.curvature_tol;
        if !ok {
            status = Status::Fail;
        }
        rows.push(vec![
            num(c),
            residual.map(num).unwrap_or_default(),
            num(slice.min_abs_genericity),
            num(slice.max_abs_k_plus_1),
            slice.points.len().to_string(),
        ]);
        if cfg.dump_metric {
            let m = &series[2].1;
            let x = centre.grid().nodes();
            let dump: Vec<Vec<String>> = (0..x.len())
                .map(|j| vec![num(x[j]), num(m.e[j]), num(m.f[j]), num(m.g[j]), num(m.genericity[j])])
                .collect();
            ctx.csv(&format!("metric_{idx:04}.csv"), &["x", "E", "F", "G", "genericity"], &dump)?;
        }
    }
    // same curvature with time derivatives from the equation, for comparison
    ctx.derive("flow_max_abs_K_plus_1", &flow_k);
    ctx.csv(
        "geometry.csv",
        &["t", "max_abs_residual", "min_abs_genericity", "max_abs_K_plus_1", "n_eval_points"],
        &rows,
    )?;
    ctx.say(format!("{} of {} centres evaluated", rows.len(), centres.len()));
    Ok(status)
}

fn check_row(test: &str, id: usize, c: &InequalityCheck) -> Vec<String> {
    vec![
        test.into(),
        id.to_string(),
        num(c.lhs),
        num(c.rhs),
        num(c.slack),
        c.pass.to_string(),
    ]
}

fn norm_check(ctx: &mut Ctx) -> Result<Status> {
    let cfg = ctx.cfg;
    let fields = corpus::product_safe_corpus(cfg.seed, cfg.corpus_size);
    // per-field (m, sigma) drawn up front so the parallel map is order-free
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let draws: Vec<(usize, f64)> = (0..fields.len())
        .map(|_| {
            let m = rng.random_range(0..=cfg.km_m_max);
            let sigma = if cfg.km_sigma_min < cfg.km_sigma_max {
                rng.random_range(cfg.km_sigma_min..=cfg.km_sigma_max)
            } else {
                cfg.km_sigma_min
            };
            (m, sigma)
        })
        .collect();
    let ids: Vec<usize> = (0..fields.len()).collect();
    let per_field = par::map(ctx.exec, &ids, |&i| -> Result<Vec<Vec<String>>> {
        let u = &fields[i];
        let (m, sigma) = draws[i];
        let p = KMParams::new(sigma, m);
        let mut rows = Vec::with_capacity(6);
        let prop = InequalityCheck::le("prop32", norms::prop32_lhs(u, p)?, norms::prop32_rhs(u, p));
        rows.push(check_row("prop32", i, &prop));
        let (l, r) = norms::lemma32_sides(u, p);
        rows.push(check_row("lemma32", i, &InequalityCheck::le("lemma32", l, r)));
        let g = &fields[(i + 1) % fields.len()];
        for c in norms::operator_inequality_suite(u, g, cfg.gevrey_sigma, cfg.gevrey_sigma_prime, cfg.gevrey_s)? {
            rows.push(check_row(c.name, i, &c));
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_field {
        rows.extend(r?);
    }
    let failures = rows.iter().filter(|r| r[5] == "false").count();
    ctx.csv("norm_check.csv", &["test", "field_id", "lhs", "rhs", "slack", "pass"], &rows)?;
    ctx.derive("checks", rows.len());
    ctx.derive("failures", failures);
    ctx.say(format!("{} checks over {} fields, {failures} failures", rows.len(), fields.len()));
    Ok(if failures == 0 { Status::Pass } else { Status::Fail })
}

fn lifespan(ctx: &mut Ctx) -> Result<Status> {
    let report = lifespan_report(ctx, None)?;
    ctx.json("lifespan.json", &report)?;
    ctx.derive("lifespan", &report);
    ctx.say(format!("u0_gnorm = {:.15e}", report.u0_gnorm));
    ctx.say(format!("R = {:.15e}", report.r));
    ctx.say(format!("c_s = {:.15e}", report.c_s));
    ctx.say(format!("M = {:.15e}", report.m));
    ctx.say(format!("L = {:.15e}", report.l));
    ctx.say(format!("T = {:.15e}", report.t_aot));
    ctx.say(format!("T_thm22 = {:.15e}", report.t_thm22));
    if report.u0_gnorm_unresolved {
        ctx.say("warning: ||u0||_{G^{1,s}} is not resolved on this grid".into());
    }
    Ok(Status::Pass)
}

/// Convenience for tests and scripts: run with a scratch `out_dir`.
pub fn run_in(cfg: &RunConfig, cmd: Subcommand, exec: Exec, out_dir: &Path) -> Result<Outcome> {
    let cfg = RunConfig {
        out_dir: out_dir.to_string_lossy().into_owned(),
        ..cfg.clone()
    };
    run(&cfg, cmd, exec)
}

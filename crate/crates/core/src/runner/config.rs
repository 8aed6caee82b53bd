//! Flat key-value run configuration (TOML syntax, `#` comments).
//!
//! Every key has a documented default, unknown keys are rejected with a
//! suggestion, and parse errors carry the line they came from.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evolution::{InitialData, Scheme, StepConfig};
use crate::geometry::PSSParams;
use crate::norms::GevreyParams;
use crate::spectral::GridSpec;

/// Either a fixed algebra constant or a request to measure it on the corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsSetting {
    Measured,
    Value(f64),
}

impl Serialize for CsSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CsSetting::Measured => s.serialize_str("measured"),
            CsSetting::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for CsSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(CsSetting::Value(v)),
            Raw::Int(v) => Ok(CsSetting::Value(v as f64)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for CsSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "measured" {
            return Ok(CsSetting::Measured);
        }
        s.parse::<f64>()
            .map(CsSetting::Value)
            .map_err(|_| format!("expected a number or \"measured\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Sech,
    GaussianMomentum,
    ModePerturbation,
    FromFile,
}

/// Everything a run depends on. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // grid
    pub half_width: f64,
    pub n_points: usize,

    // initial data
    pub initial: InitialKind,
    pub amplitude: f64,
    pub width: f64,
    pub epsilon: f64,
    pub mode: i64,
    pub initial_path: String,

    // time stepping
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub resolution_guard: f64,
    pub cfl_guard: f64,
    pub slope_ceiling: f64,
    pub positivity_tolerance_m: f64,
    pub positivity_tolerance_u: f64,
    pub diag_s: f64,
    /// Explicit sample times; when empty, `sample_every` decides.
    pub sample_times: Vec<f64>,
    /// Uniform sampling `0, h, 2h, ... <= t_end`; zero means final state only.
    pub sample_every: f64,
    pub snapshots: bool,

    // norms and inequality suites
    pub gevrey_sigma: f64,
    pub gevrey_sigma_prime: f64,
    pub gevrey_s: f64,
    pub km_m_max: usize,
    pub km_sigma_min: f64,
    pub km_sigma_max: f64,
    pub corpus_size: usize,
    pub seed: u64,

    // analyticity bound
    pub sigma0: f64,
    pub phi_t_max: f64,

    // Taylor comparison and lifespan
    pub taylor_order: usize,
    pub taylor_points: usize,
    pub taylor_tol: f64,
    pub c_s: CsSetting,
    /// Overrides the computed `||u0||_{G^{1,s}}` in lifespan formulas.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_gnorm: Option<f64>,
    /// Radius `R` of the lifespan estimate; defaults to `||u0||_{G^{1,s}}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifespan_r: Option<f64>,

    // geometry
    pub mu_metric: f64,
    pub m1: i32,
    pub sign: i32,
    pub curvature_dt: f64,
    pub genericity_threshold: f64,
    pub residual_tol: f64,
    pub curvature_tol: f64,
    pub dump_metric: bool,

    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let step = StepConfig::default();
        let pss = PSSParams::default();
        Self {
            half_width: 40.0,
            n_points: 1024,
            initial: InitialKind::Sech,
            amplitude: 1.0,
            width: 1.0,
            epsilon: 0.0,
            mode: 0,
            initial_path: String::new(),
            dt: step.dt,
            t_end: step.t_end,
            scheme: step.scheme,
            resolution_guard: step.resolution_guard,
            cfl_guard: step.cfl_guard,
            slope_ceiling: step.slope_ceiling,
            positivity_tolerance_m: step.positivity_tolerance_m,
            positivity_tolerance_u: step.positivity_tolerance_u,
            diag_s: step.diag_s,
            sample_times: Vec::new(),
            sample_every: 0.0,
            snapshots: false,
            gevrey_sigma: 0.5,
            gevrey_sigma_prime: 0.25,
            gevrey_s: 2.0,
            km_m_max: 10,
            km_sigma_min: -1.0,
            km_sigma_max: -0.1,
            corpus_size: 500,
            seed: 42,
            sigma0: -0.1,
            phi_t_max: 0.2,
            taylor_order: 24,
            taylor_points: 10,
            taylor_tol: 1e-7,
            c_s: CsSetting::Measured,
            u0_gnorm: None,
            lifespan_r: None,
            mu_metric: pss.mu_metric,
            m1: pss.m1,
            sign: pss.sign,
            curvature_dt: 2e-3,
            genericity_threshold: crate::geometry::DEFAULT_GENERICITY_THRESHOLD,
            residual_tol: 1e-6,
            curvature_tol: 1e-3,
            dump_metric: false,
            out_dir: "out".into(),
        }
    }
}

fn field_error(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigField {
        field: field.into(),
        message: message.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.half_width, self.n_points).map_err(|e| field_error("n_points", e.to_string()))
    }

    pub fn initial_data(&self) -> InitialData {
        match self.initial {
            InitialKind::Sech => InitialData::Sech {
                amplitude: self.amplitude,
                width: self.width,
            },
            InitialKind::GaussianMomentum => InitialData::GaussianMomentum {
                amplitude: self.amplitude,
                width: self.width,
            },
            InitialKind::ModePerturbation => InitialData::ModePerturbation {
                amplitude: self.amplitude,
                width: self.width,
                epsilon: self.epsilon,
                mode: self.mode,
            },
            InitialKind::FromFile => InitialData::FromFile {
                path: self.initial_path.clone(),
            },
        }
    }

    pub fn step(&self) -> StepConfig {
        StepConfig {
            dt: self.dt,
            t_end: self.t_end,
            scheme: self.scheme,
            resolution_guard: self.resolution_guard,
            cfl_guard: self.cfl_guard,
            slope_ceiling: self.slope_ceiling,
            positivity_tolerance_m: self.positivity_tolerance_m,
            positivity_tolerance_u: self.positivity_tolerance_u,
            diag_s: self.diag_s,
        }
    }

    pub fn pss(&self) -> Result<PSSParams> {
        PSSParams::new(self.mu_metric, self.m1, self.sign).map_err(|e| {
            let field = if self.m1 != -2 && self.m1 != 1 { "m1" } else { "sign" };
            field_error(field, e.to_string())
        })
    }

    pub fn gevrey(&self) -> Result<GevreyParams> {
        GevreyParams::new(self.gevrey_sigma, self.gevrey_s).map_err(|e| field_error("gevrey_sigma", e.to_string()))
    }

    /// Sample times after applying `sample_every`; empty means final state only.
    pub fn resolved_sample_times(&self) -> Vec<f64> {
        if !self.sample_times.is_empty() || self.sample_every <= 0.0 {
            return self.sample_times.clone();
        }
        let count = (self.t_end / self.sample_every + 1e-9).floor() as usize;
        // 1/h integral (h = 0.1, 0.05, ...): divide so 3 * 0.1 comes out as 0.3
        let per_unit = 1.0 / self.sample_every;
        let exact = (per_unit - per_unit.round()).abs() < 1e-9 && per_unit.round() >= 1.0;
        (0..=count)
            .map(|i| if exact { i as f64 / per_unit.round() } else { i as f64 * self.sample_every })
            .collect()
    }

    /// Semantic checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        positive("dt", self.dt)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(field_error("t_end", format!("must be nonnegative, got {}", self.t_end)));
        }
        positive("resolution_guard", self.resolution_guard)?;
        positive("cfl_guard", self.cfl_guard)?;
        positive("slope_ceiling", self.slope_ceiling)?;
        if !(self.sample_every >= 0.0 && self.sample_every.is_finite()) {
            return Err(field_error("sample_every", "must be nonnegative"));
        }
        let mut last = f64::NEG_INFINITY;
        for &t in &self.sample_times {
            if !(t >= 0.0 && t <= self.t_end) {
                return Err(field_error("sample_times", format!("{t} lies outside [0, t_end = {}]", self.t_end)));
            }
            if t <= last {
                return Err(field_error("sample_times", "must be strictly increasing"));
            }
            last = t;
        }
        if matches!(self.initial, InitialKind::FromFile) && self.initial_path.is_empty() {
            return Err(field_error("initial_path", "required when initial = \"from_file\""));
        }
        if !matches!(self.initial, InitialKind::FromFile) {
            positive("width", self.width)?;
        }
        self.gevrey()?;
        if !(self.gevrey_sigma_prime > 0.0 && self.gevrey_sigma_prime < self.gevrey_sigma && self.gevrey_sigma <= 1.0) {
            return Err(field_error(
                "gevrey_sigma_prime",
                format!(
                    "need 0 < gevrey_sigma_prime < gevrey_sigma <= 1, got {} and {}",
                    self.gevrey_sigma_prime, self.gevrey_sigma
                ),
            ));
        }
        if !(self.km_sigma_min <= self.km_sigma_max && self.km_sigma_max < 0.0) {
            return Err(field_error("km_sigma_max", "need km_sigma_min <= km_sigma_max < 0"));
        }
        if self.corpus_size < 2 {
            return Err(field_error("corpus_size", "need at least 2 fields"));
        }
        if !(self.sigma0 < 0.0) {
            return Err(field_error("sigma0", format!("must be negative, got {}", self.sigma0)));
        }
        if self.taylor_order > crate::taylor::MAX_ORDER {
            return Err(field_error(
                "taylor_order",
                format!("at most {}, got {}", crate::taylor::MAX_ORDER, self.taylor_order),
            ));
        }
        if self.taylor_points == 0 {
            return Err(field_error("taylor_points", "must be at least 1"));
        }
        positive("taylor_tol", self.taylor_tol)?;
        if let CsSetting::Value(v) = self.c_s {
            positive("c_s", v)?;
        }
        if let Some(v) = self.u0_gnorm {
            positive("u0_gnorm", v)?;
        }
        if let Some(v) = self.lifespan_r {
            positive("lifespan_r", v)?;
        }
        self.pss()?;
        positive("curvature_dt", self.curvature_dt)?;
        positive("genericity_threshold", self.genericity_threshold)?;
        positive("residual_tol", self.residual_tol)?;
        positive("curvature_tol", self.curvature_tol)?;
        Ok(())
    }

    /// The normalised text form: every key, defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
        let known = known_keys();
        for (key, value) in &table {
            if !known.iter().any(|k| k == key) {
                let hint = suggest(key, &known)
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                return Err(Error::Config {
                    line: key_line(text, key),
                    message: format!("unknown key `{key}`{hint}"),
                });
            }
            if value.is_table() {
                return Err(Error::Config {
                    line: key_line(text, key),
                    message: format!("`{key}`: the config is flat, tables are not allowed"),
                });
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml(&text)
}

fn known_keys() -> Vec<String> {
    let cfg = RunConfig {
        u0_gnorm: Some(1.0),
        lifespan_r: Some(1.0),
        ..RunConfig::default()
    };
    let table: toml::Table = toml::from_str(&cfg.to_toml()).expect("defaults round-trip");
    table.keys().cloned().collect()
}

/// Closest known key, if it is close enough to be a plausible typo.
fn suggest<'a>(key: &str, known: &'a [String]) -> Option<&'a str> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(score, _)| *score >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.as_str())
}

fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
        .unwrap_or(0)
}

fn syntax_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Config {
        line,
        message: e.message().trim().to_string(),
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: sample {index} is not finite ({value})")]
    InvalidField { index: usize, value: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter order violated: sigma' = {sigma_prime} must be below sigma = {sigma}")]
    ParameterOrder { sigma: f64, sigma_prime: f64 },

    #[error("under-resolved field: spectral tail fraction {tail:e} exceeds guard {guard:e}")]
    UnderResolved { tail: f64, guard: f64 },

    #[error("CFL guard violated: dt*max|u|*max|xi| = {value} > {guard}")]
    Cfl { value: f64, guard: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("wave breaking suspected at t = {t}: max|u_x| = {slope} exceeds {ceiling}")]
    WaveBreaking { t: f64, slope: f64, ceiling: f64 },

    #[error("positivity violated: {quantity} reached {min:e} at t = {t}")]
    Positivity { quantity: &'static str, min: f64, t: f64 },

    #[error("initial momentum is not positive: min m0 = {min:e}")]
    NegativeMomentum { min: f64 },

    #[error("insufficient band: {usable} usable modes, need at least {required}")]
    InsufficientBand { usable: usize, required: usize },

    #[error("no evaluation points: the metric is degenerate everywhere on the slab")]
    NoEvaluationPoints,

    #[error("metric internal-consistency check failed: mismatch {mismatch:e}")]
    MetricMismatch { mismatch: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config error in `{field}`: {message}")]
    ConfigField { field: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A guard abort during time stepping. Carries the last state that passed all
/// guards so callers can still report it.
#[derive(Debug)]
pub struct Aborted<S> {
    pub last_good: S,
    pub cause: Error,
}

//! `novikov`: command-line front end to the experiment pipelines.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 a solver guard
//! aborted the run, 64 bad usage or invalid config, 70 any other error
//! (I/O, malformed input file).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use novikov::runner::{self, CsSetting, RunConfig, Subcommand};
use novikov::Exec;

const USAGE_ERROR: u8 = 64;
const INTERNAL_ERROR: u8 = 70;

#[derive(Parser, Debug)]
#[command(name = "novikov", version, about = "Pseudospectral runs and analyticity/geometry checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(ClapSubcommand, Debug, Clone, Copy)]
enum Command {
    /// Evolve the initial data and write conserved-quantity diagnostics.
    Evolve,
    /// Track the analyticity radius against the lower bound.
    AnalyzeRadius,
    /// Compare the Taylor-in-time series with RK4 and report the lifespan.
    TaylorCompare,
    /// Zero-curvature residual and Gaussian curvature along a run.
    GeometryCheck,
    /// Norm inequalities over a random field corpus.
    NormCheck,
    /// Print the local existence time from the norm of the data.
    Lifespan,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Evolve => Subcommand::Evolve,
            Command::AnalyzeRadius => Subcommand::AnalyzeRadius,
            Command::TaylorCompare => Subcommand::TaylorCompare,
            Command::GeometryCheck => Subcommand::GeometryCheck,
            Command::NormCheck => Subcommand::NormCheck,
            Command::Lifespan => Subcommand::Lifespan,
        }
    }
}

/// Flags win over the config file, which wins over built-in defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Config file (flat TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    seed: Option<u64>,
    #[arg(long = "t-end", global = true, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Grid points.
    #[arg(long = "N", global = true, allow_negative_numbers = true)]
    n_points: Option<usize>,
    /// Half-width of the periodic box [-L, L).
    #[arg(long = "L", global = true, allow_negative_numbers = true)]
    half_width: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma0: Option<f64>,
    #[arg(long = "mu-metric", global = true, allow_negative_numbers = true)]
    mu_metric: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    m1: Option<i32>,
    /// Algebra constant: a number or `measured`.
    #[arg(long = "cs", global = true, value_name = "X|measured")]
    c_s: Option<CsSetting>,
    /// Use this value for the initial data's G^{1,s} norm instead of measuring it.
    #[arg(long = "u0-gnorm", global = true, allow_negative_numbers = true)]
    u0_gnorm: Option<f64>,
    /// Radius of the lifespan ball (default: the initial norm).
    #[arg(long = "R", global = true, allow_negative_numbers = true)]
    lifespan_r: Option<f64>,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(seed => seed, t_end => t_end, n_points => n_points, half_width => half_width,
             dt => dt, sigma0 => sigma0, mu_metric => mu_metric, m1 => m1, c_s => c_s);
        if let Some(out) = &self.out {
            cfg.out_dir = out.to_string_lossy().into_owned();
        }
        if self.u0_gnorm.is_some() {
            cfg.u0_gnorm = self.u0_gnorm;
        }
        if self.lifespan_r.is_some() {
            cfg.lifespan_r = self.lifespan_r;
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(USAGE_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let mut cfg = match &cli.overrides.config {
        Some(path) => match runner::parse_config(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return ExitCode::from(USAGE_ERROR);
            }
        },
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    if let Err(e) = cfg.validate() {
        eprintln!("{e}");
        return ExitCode::from(USAGE_ERROR);
    }
    let exec = if cli.overrides.sequential { Exec::Sequential } else { Exec::Parallel };
    match runner::run(&cfg, cli.command.into(), exec) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e @ novikov::Error::ConfigField { .. }) => {
            eprintln!("{e}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(INTERNAL_ERROR)
        }
    }
}

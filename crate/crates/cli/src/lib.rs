//! Command-line front end for the measure-data heat lab: config parsing,
//! experiment runs, CSV/JSON output and the `verify` property suite.

pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use measure_heat_core::Error as CoreError;

pub use config::ExperimentConfig;
pub use verify::{run_verify, Tier, VerifyOptions, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_DUALITY: i32 = 4;
pub const EXIT_HORIZON: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Singular { .. } | CoreError::NonConvergence { .. } | CoreError::EigenNonConvergence { .. } => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Elliptic,
    Parabolic,
    Retrograde,
    DualityCheck,
    Asymptotic,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "measure-heat", version, about = "Heat equation with measure data: solvers and property checks")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Tier::Quick)]
    pub tier: Tier,
    /// Pair the measure with the wrong end of each dual step.
    #[arg(long)]
    pub break_adjoint: bool,
}

/// Worker count from `MEASURE_HEAT_THREADS`, else available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("MEASURE_HEAT_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// What a command produced: an exit code and text for stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { code: EXIT_OK, stdout }
    }
}

pub fn execute(args: &Args) -> Result<Outcome, CliError> {
    if args.command == Command::Verify {
        let from_config = match &args.config {
            Some(p) => Some(ExperimentConfig::load(p)?),
            None => None,
        };
        let seed = args.seed.or(from_config.as_ref().map(|c| c.seed)).unwrap_or(0);
        let out = args.out.clone().or_else(|| from_config.and_then(|c| c.output.dir));
        let opts = VerifyOptions { seed, tier: args.tier, break_adjoint: args.break_adjoint, threads: thread_cap() };
        return commands::cmd_verify(&opts, out.as_deref());
    }
    let path = args.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = cfg.out_dir(args.out.as_deref());
    match args.command {
        Command::Elliptic => commands::cmd_elliptic(&cfg, &out),
        Command::Parabolic => commands::cmd_parabolic(&cfg, &out),
        Command::Retrograde => commands::cmd_retrograde(&cfg, &out),
        Command::DualityCheck => commands::cmd_duality_check(&cfg, &out, args.break_adjoint),
        Command::Asymptotic => commands::cmd_asymptotic(&cfg, &out),
        Command::Verify => unreachable!(),
    }
}

/// Parses `argv`, runs, prints, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&args) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `subdiff` command-line front end.

mod commands;
mod config;

use std::fmt;
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ClockArgs, MarketArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or specification: exit code 2.
    Config(String),
    /// A numerical routine failed: exit code 3.
    Numeric(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<subdiff::Error> for CliError {
    fn from(e: subdiff::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "subdiff", version, about = "Sub-diffusive Black-Scholes pricing and simulation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Seed of the random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "SUBDIFF_THREADS")]
    pub threads: Option<usize>,
    /// Output file (standard output when absent).
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Output format; defaults to csv for `.csv` outputs and json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price a European call or put.
    Price {
        #[command(flatten)]
        market: MarketArgs,
        /// call or put.
        #[arg(long)]
        payoff: Option<String>,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long)]
        maturity: Option<f64>,
        /// mc, quad, pde, plain-mc or girsanov.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        /// Valuation time.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Spot at the valuation time (defaults to s0).
        #[arg(long)]
        spot: Option<f64>,
        /// Overshoot at the valuation time (defaults to the wake-up time).
        #[arg(long)]
        overshoot: Option<f64>,
    },
    /// Simulate stock paths on a uniform grid.
    Simulate {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        paths: Option<usize>,
        /// p (physical) or q (martingale measure).
        #[arg(long, default_value = "q")]
        measure: String,
    },
    /// Density of the inverse stable subordinator.
    Density {
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// One or more points, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve the time-fractional Black-Scholes equation on a grid.
    Pde {
        #[command(flatten)]
        clock: ClockArgs,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        tmax: f64,
        /// Time points by price points, e.g. 200x200.
        #[arg(long, default_value = "50x50")]
        grid: String,
        #[arg(long, default_value_t = 0.5)]
        x_min: f64,
        #[arg(long, default_value_t = 1.5)]
        x_max: f64,
        /// Wake-up time a.
        #[arg(long = "wake-up", default_value_t = 0.0)]
        a: f64,
        /// talbot or gaver-stehfest.
        #[arg(long)]
        inversion: Option<String>,
        /// Solve for a put instead of a call.
        #[arg(long)]
        put: bool,
    },
    /// Law-equivalence battery for the exponential martingale change of measure.
    VerifyGirsanov {
        #[command(flatten)]
        clock: ClockArgs,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        paths: Option<usize>,
        /// Wake-up time a.
        #[arg(long = "wake-up", default_value_t = 0.0)]
        a: f64,
    },
    /// Value surface over valuation time, spot and overshoot.
    Surface {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long)]
        payoff: Option<String>,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long)]
        maturity: Option<f64>,
        #[arg(long, default_value_t = 5)]
        t_points: usize,
        #[arg(long, default_value_t = 0.8)]
        x_min: f64,
        #[arg(long, default_value_t = 1.2)]
        x_max: f64,
        #[arg(long, default_value_t = 5)]
        x_points: usize,
        /// Overshoot values, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        overshoots: Vec<f64>,
        /// Paths per point for clocks without a density.
        #[arg(long)]
        paths: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price { .. } => "price",
            Command::Simulate { .. } => "simulate",
            Command::Density { .. } => "density",
            Command::Pde { .. } => "pde",
            Command::VerifyGirsanov { .. } => "verify-girsanov",
            Command::Surface { .. } => "surface",
        }
    }
}

/// Random-stream provenance of a run.
#[derive(Debug, Serialize)]
pub struct SeedLineage {
    pub seed: u64,
    pub generator: &'static str,
    pub streams: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub config_hash: String,
    pub results: serde_json::Value,
    pub diagnostics: serde_json::Value,
    pub runtime_seconds: f64,
    pub threads: usize,
    pub seed_lineage: SeedLineage,
}

/// Output of one command: JSON results plus an optional table.
pub struct Outcome {
    pub results: serde_json::Value,
    pub diagnostics: serde_json::Value,
    pub table: Option<Vec<u8>>,
}

pub const DEFAULT_SEED: u64 = 1;

fn config_hash(text: &str, command: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for arg in command {
        h.update([0u8]);
        h.update(arg.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let loaded = config::load(cli.config.as_deref())?;
    let cfg = &loaded.config;
    let seed = cli.seed.or(cfg.method.seed).unwrap_or(DEFAULT_SEED);
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    let out = cli.out.clone().or_else(|| cfg.output.path.clone());
    let format = match (cli.format, cfg.output.format.as_deref()) {
        (Some(f), _) => f,
        (None, Some("json")) => Format::Json,
        (None, Some("csv")) => Format::Csv,
        (None, Some(other)) => return Err(CliError::Config(format!("unknown output format {other:?}"))),
        (None, None) if out.as_deref().is_some_and(|p| p.ends_with(".csv")) => Format::Csv,
        (None, None) => Format::Json,
    };
    let name = cli.command.name();
    let outcome = pool.install(|| commands::dispatch(&cli.command, cfg, seed))?;
    let bytes = match format {
        Format::Csv => outcome
            .table
            .ok_or_else(|| CliError::Config(format!("`{name}` has no tabular output; use --format json")))?,
        Format::Json => {
            let report = RunReport {
                command: argv.clone(),
                config_hash: config_hash(&loaded.text, &argv[1..]),
                results: outcome.results,
                diagnostics: outcome.diagnostics,
                runtime_seconds: start.elapsed().as_secs_f64(),
                threads: pool.current_num_threads(),
                seed_lineage: SeedLineage {
                    seed,
                    generator: "ChaCha8",
                    streams: "path i draws from stream i of the seed",
                },
            };
            let mut s = serde_json::to_vec_pretty(&report).expect("reports serialise");
            s.push(b'\n');
            s
        }
    };
    match out {
        Some(path) => std::fs::write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {path}: {e}"))),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Config(format!("cannot write output: {e}"))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subdiff: {e}");
            ExitCode::from(e.code())
        }
    }
}

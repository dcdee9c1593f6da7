//! Command-line driver: configuration loading, protocol runs, estimation,
//! dip fits and the end-to-end reproduction pipeline.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hom_core::{ScanVariable, SinglesNormalization};

pub mod commands;
pub mod reproduce;

#[derive(Debug, Parser)]
#[command(name = "hom", version, about = "HOM interference with weak coherent states")]
pub struct Cli {
    /// Worker threads for the simulation (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML run configuration; omitted keys take default values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Singles normalization of the bound (decoy_sum or signal_run).
    #[arg(long = "s-norm")]
    pub s_norm: Option<SinglesNormalization>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Scanned quantity (tau or mu).
    #[arg(long, requires = "grid")]
    pub scan: Option<ScanVariable>,
    /// Grid as start:stop:n.
    #[arg(long, requires = "scan", allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Model curve of g2(0), predicted bound and single-photon truth.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        scan: ScanArgs,
        /// Output directory (prints CSV to stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated counts for all four settings, one file per grid point.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bound, visibility and g2 from a counts file or a scan index.
    Estimate {
        input: PathBuf,
        #[arg(long = "s-norm")]
        s_norm: Option<SinglesNormalization>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inverted Gaussian fit of a scan results table.
    Fit {
        input: PathBuf,
        /// Fixed large-delay value: 1 fits g2, 0.5 fits the bound.
        #[arg(long)]
        baseline: f64,
        /// Column to fit (defaults from the baseline).
        #[arg(long)]
        y_col: Option<String>,
        /// Uncertainty column (defaults from the baseline).
        #[arg(long)]
        err_col: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerates every figure table and checks the acceptance thresholds.
    ReproducePaper {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Pulse budgets divided by 100, for smoke tests.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Acceptance,
    Other,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Acceptance => 4,
            ErrorKind::Other => 1,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ErrorKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ErrorKind::Config, error)
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ErrorKind::Data, error)
    }

    pub fn other(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ErrorKind::Other, error)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Runs one parsed invocation, inside a dedicated pool when `--threads` is set.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(CliError::config)?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Predict { model, scan, out } => commands::predict(&model, &scan, out.as_deref()),
        Command::Simulate { model, scan, out } => commands::simulate(&model, &scan, &out),
        Command::Estimate { input, s_norm, out } => {
            commands::estimate(&input, s_norm.unwrap_or_default(), out.as_deref())
        }
        Command::Fit {
            input,
            baseline,
            y_col,
            err_col,
            out,
        } => commands::fit(&input, baseline, y_col, err_col, out.as_deref()),
        Command::ReproducePaper { out, seed, quick } => {
            let profile = if quick {
                reproduce::Profile::quick()
            } else {
                reproduce::Profile::full()
            };
            let seed = seed.unwrap_or(hom_core::io::defaults::SEED);
            let started = std::time::Instant::now();
            let report = reproduce::run(&out, seed, &profile)?;
            for line in report.lines() {
                println!("{line}");
            }
            eprintln!("runtime {:.1} s", started.elapsed().as_secs_f64());
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::new(
                    ErrorKind::Acceptance,
                    anyhow::anyhow!("{} acceptance check(s) failed", report.failures()),
                ))
            }
        }
    }
}

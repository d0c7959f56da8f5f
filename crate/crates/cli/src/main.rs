//! `impactlab` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IMPACTLAB_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "impactlab",
    version,
    about = "Price-impact simulation and estimation laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Experiment config (JSON); explicit flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single seed, replacing the config's seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $IMPACTLAB_OUT_DIR, else ./impactlab-out].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate order flow, price it and write one tape per seed.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Measure R, C, D, rho and R(T, v) from a tape; invert for the kernel.
    Measure {
        #[command(flatten)]
        common: Common,
        /// Tape CSV with a price column.
        #[arg(long)]
        tape: PathBuf,
        /// Impact scale for the inverted kernel; omit to report it in units of lambda E[v^psi].
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        psi: f64,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Invert a measured response for the propagator kernel.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Response curve CSV (`lag,value,count,se`).
        #[arg(long)]
        response: PathBuf,
        /// Sign autocorrelation CSV.
        #[arg(long)]
        autocorr: PathBuf,
        #[arg(long, default_value_t = 256)]
        kernel_len: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        psi: f64,
        /// Volume entering `lambda v^psi`.
        #[arg(long, default_value_t = 1.0)]
        volume: f64,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Lag-zero sign covariance, `1 - mean(eps)^2` for a measured curve.
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        /// Number of equations; defaults to the kernel length.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Search round-trip strategies over a (beta, psi) grid.
    Manip {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        psis: Option<Vec<f64>>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Positive trade sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, value_enum)]
        own_impact: Option<OwnImpactArg>,
    },
    /// Run the configured pipeline and the selected acceptance criteria.
    Report {
        #[command(flatten)]
        common: Common,
        /// Use a shipped config instead of `--config`.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Acceptance criteria to evaluate, comma separated; overrides the config.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u32>>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelFlags {
    /// Use a shipped config as the base instead of `--config`.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Trades kept after burn-in.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    /// Target sign autocorrelation exponent for long-memory generators.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    /// Power-law kernel exponent.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Constant trade volume.
    #[arg(long)]
    pub volume: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    PaperSuite,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelArg {
    Kyle,
    Propagator,
    Surprise,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorArg {
    Iid,
    Clipped,
    Metaorder,
    Markov,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwnImpactArg {
    Full,
    Half,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            // Usage errors share the config-error exit code.
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("impactlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `phaseid`: simulate meter data, identify phase connections, score and
//! validate the results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseid::linear_pf::MatrixFormat;
use phaseid::mmle::DiagnosticsLevel;
use phaseid::sim::{NoiseModel, SimMode};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_200_101;

#[derive(Debug, Parser)]
#[command(name = "phaseid", version, about = "Phase connection identification from smart-meter data")]
pub struct Cli {
    /// Worker threads; 1 runs everything on the calling thread. Defaults to
    /// the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a measurement CSV and a truth sidecar from a feeder model.
    Simulate(SimulateArgs),
    /// Estimate every metered load's phase connection.
    Identify(IdentifyArgs),
    /// Score an identification report against a truth file.
    Evaluate(EvaluateArgs),
    /// Residual normality and whiteness checks for an assignment.
    Validate(ValidateArgs),
    /// Compare identification with exhaustive enumeration on a small feeder.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Feeder model JSON.
    #[arg(long)]
    pub feeder: PathBuf,
    /// Output directory for `measurements.csv` and `truth.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SimMode::Linear)]
    pub mode: SimMode,
    /// Meter accuracy class: three-sigma noise as a fraction of nominal.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Where voltage noise enters: `increment` or `reading`. Defaults to
    /// `increment` in linear mode and `reading` in nonlinear mode.
    #[arg(long)]
    pub noise_model: Option<NoiseModel>,
    /// Number of samples.
    #[arg(long, default_value_t = 2160)]
    pub samples: usize,
    /// Sampling interval in minutes.
    #[arg(long, default_value_t = 60)]
    pub interval_min: i64,
    /// Round readings to 1 V (primary), 0.1 V (secondary), 0.1 kW and 0.1 kVAr.
    #[arg(long)]
    pub quantize: bool,
    /// Fraction of loads that report measurements.
    #[arg(long, default_value_t = 1.0)]
    pub penetration: f64,
    /// Wide CSV of real-power consumption in kW (`time` column plus one
    /// column per load); synthetic profiles are used otherwise.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Truth JSON overriding the connections in the feeder file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Standard deviation of each substation phase's own voltage variation,
    /// per unit. Zero makes the three phases indistinguishable at the
    /// substation.
    #[arg(long, default_value_t = 0.001)]
    pub substation_phase_sd: f64,
    /// Random seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Feeder model JSON.
    #[arg(long)]
    pub feeder: PathBuf,
    /// Measurement CSV.
    #[arg(long)]
    pub measurements: PathBuf,
    /// Powers in the measurement file are consumption-positive.
    #[arg(long)]
    pub consumption_positive: bool,
    /// Scale line admittances by Gaussian factors with this three-sigma
    /// fraction before estimating.
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    /// Service branch to drop from the model (repeatable).
    #[arg(long = "missing-branch")]
    pub missing_branches: Vec<String>,
    /// Seed for the model perturbation.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Truth JSON; adds the accuracy to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report JSON path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `none`, `summary` (residual statistics) or `full` (plus per-subproblem
    /// solver traces).
    #[arg(long, default_value = "none")]
    pub diagnostics: DiagnosticsLevel,
    /// Directory receiving the reduced system matrix and the voltage and
    /// angle sensitivities.
    #[arg(long)]
    pub dump_matrices: Option<PathBuf>,
    /// `csv` or `binary` (row-major little-endian f64).
    #[arg(long, default_value = "csv")]
    pub matrix_format: MatrixFormat,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Identification report JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// Truth JSON.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Assignment to test: a truth JSON or an identification report. The
    /// estimate is computed when omitted.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// KS significance level.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Output JSON path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Feeder model JSON with at most seven loads.
    #[arg(long)]
    pub feeder: PathBuf,
    /// Measurement CSV; noiseless linear data is simulated when omitted.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    /// Samples to simulate when no measurements are given.
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
    /// Standard deviation of each substation phase's own voltage variation,
    /// per unit. Zero makes the three phases indistinguishable at the
    /// substation.
    #[arg(long, default_value_t = 0.001)]
    pub substation_phase_sd: f64,
    /// Random seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Relabel the sensitivities' phases before estimating. With a balanced
    /// substation (`--substation-phase-sd 0`) this makes the check fail.
    #[arg(long)]
    pub corrupt_sensitivities: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

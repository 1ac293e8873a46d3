//! `sskg`: experiment runner for stealthy secret key generation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sskg::protocol::ProtocolMode;
use sskg::sources::Fade;

use config::{ConfigFile, Format};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// Malformed input or parameters outside their domain.
    Validation(String),
    /// A precondition that the inputs do not meet, or a size guard.
    Infeasible(String),
    /// An internal numeric failure.
    Numeric(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Infeasible(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<sskg::Error> for Failure {
    fn from(e: sskg::Error) -> Self {
        if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sskg", version, about = "Stealthy secret key generation experiments")]
pub struct Cli {
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with default parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lower and upper bounds on the secret key capacity of a source triple.
    Bounds(BoundsArgs),
    /// Physical or stochastic degradedness of a source triple.
    Degrade(DegradeArgs),
    /// Usual stochastic order between two Nakagami fading powers.
    Order(OrderArgs),
    /// Quantized key bounds of the fast-fading satellite source.
    Satellite(SatelliteArgs),
    /// Exact or Monte Carlo runs of the binning protocol.
    Simulate(SimulateArgs),
    /// Key budget of the covert phase and the resulting schedule.
    Budget(BudgetArgs),
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// JSON joint distribution of (X, Y, Z).
    pub dist_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    pub dist_file: Option<PathBuf>,
    /// Largest accepted factorization residual of a witness.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest `I(X;Z|Y)` accepted as a Markov chain.
    #[arg(long)]
    pub markov_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct OrderArgs {
    #[arg(long)]
    pub mx: Option<f64>,
    #[arg(long)]
    pub wx: Option<f64>,
    #[arg(long)]
    pub mz: Option<f64>,
    #[arg(long)]
    pub wz: Option<f64>,
    /// Comma-separated evaluation points.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct SatelliteArgs {
    #[arg(long)]
    pub source_variance: Option<f64>,
    /// `nakagami:M,W` or `constant:A`.
    #[arg(long, value_parser = config::parse_fade)]
    pub fade_x: Option<Fade>,
    #[arg(long, value_parser = config::parse_fade)]
    pub fade_z: Option<Fade>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Quantization bins per coordinate.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    /// Write the raw samples to this CSV file.
    #[arg(long)]
    pub raw_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Exact,
    MonteCarlo,
}

impl From<ModeArg> for ProtocolMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => ProtocolMode::Exact,
            ModeArg::MonteCarlo => ProtocolMode::MonteCarlo,
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON joint distribution of the source.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// `p,q` of a binary symmetric cascade source.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub cascade: Option<Vec<f64>>,
    /// Comma-separated blocklengths.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Key rate.
    #[arg(long = "r")]
    pub r: Option<f64>,
    /// Comma-separated confusion rates.
    #[arg(long = "r1", value_delimiter = ',', allow_hyphen_values = true)]
    pub r1: Option<Vec<f64>>,
    /// Read R1 values as offsets from the confusion threshold.
    #[arg(long)]
    pub r1_relative: bool,
    /// Random codebooks per (n, R1).
    #[arg(long)]
    pub codebooks: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Blocks per Monte Carlo run.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Robust typicality parameter.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also write the sweep table to this CSV file.
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    /// Divergence at Willie per covert symbol.
    #[arg(long)]
    pub dz: Option<f64>,
    /// Divergence at Bob per covert symbol.
    #[arg(long)]
    pub dy: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Constant of the vanishing term in the sufficient key rate.
    #[arg(long)]
    pub c: Option<f64>,
    /// Charge one key bit per block instead of one per symbol.
    #[arg(long)]
    pub per_block: bool,
    /// Source for the generated-key side of the schedule.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub cascade: Option<Vec<f64>>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    commands::dispatch(&cli, file)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: sskg::Error| Failure::from(e).exit_code();
        assert_eq!(code(sskg::Error::Domain("x".into())), 1);
        assert_eq!(code(sskg::Error::Precondition("x".into())), 2);
        let guard = sskg::Error::SizeGuard {
            what: "x".into(),
            requested: 2,
            limit: 1,
        };
        assert_eq!(code(guard), 2);
        assert_eq!(code(sskg::Error::Numeric("x".into())), 3);
    }
}

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mewls::Example2Variant;

/// Maximum-entropy weighted least squares by branch continuation.
#[derive(Debug, Parser)]
#[command(name = "mewls", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Trace the branch from the least-squares start down to a target MSE.
    Trace(TraceArgs),
    /// Post-process a completed trace directory.
    Diagnose(DiagnoseArgs),
    /// Brute-force the maximum-entropy weights on a simplex grid (small problems only).
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Four,
    Eight,
}

impl From<Variant> for Example2Variant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Four => Example2Variant::Four,
            Variant::Eight => Example2Variant::Eight,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// 1: line with outliers, 2: symmetric point cloud.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    example: u8,
    /// Point cloud for example 2 [default: eight].
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    /// Variance of the Gaussian noise added to inlier ordinates.
    #[arg(long, allow_hyphen_values = true)]
    noise_sigma2: Option<f64>,
    /// JSON file with dataset settings; --seed and --noise-sigma2 override it.
    #[arg(long, value_name = "FILE")]
    dataset_config: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Replace an existing run in DIR.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Input CSV (x,y[,label] or a_1..a_n,b).
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Target MSE, strictly between 0 and the uniform-weight MSE.
    #[arg(long, allow_hyphen_values = true, value_name = "V")]
    target_mse: f64,
    /// Number of log-spaced output levels.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// JSON file with continuation settings.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Directory written by `trace`.
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
    /// Weight threshold for the core set instead of the computed one.
    #[arg(long, allow_hyphen_values = true, value_name = "V")]
    core_threshold: Option<f64>,
    /// Lower end of the MSE range used for rate fits [default: final E, with the upper
    /// end at a tenth of the starting E when that lies above it].
    #[arg(
        long,
        allow_hyphen_values = true,
        value_name = "V",
        requires = "fit_hi"
    )]
    fit_lo: Option<f64>,
    #[arg(
        long,
        allow_hyphen_values = true,
        value_name = "V",
        requires = "fit_lo"
    )]
    fit_hi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long, allow_hyphen_values = true, value_name = "V")]
    mse: f64,
    /// Simplex grid points per unit weight.
    #[arg(long, value_name = "N", default_value_t = 200)]
    resolution: usize,
    /// Output directory [default: directory of the data file].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return clap_failure(e),
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Trace(a) => commands::trace(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Oracle(a) => commands::oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(name) = e.usage_of {
                eprintln!("\n{}", usage_for(Some(name)));
            }
            ExitCode::from(e.code)
        }
    }
}

fn usage_for(subcommand: Option<&str>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match subcommand.and_then(|name| cmd.find_subcommand_mut(name)) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// Prints a parse error, adding the usage line when clap left it out.
fn clap_failure(e: clap::Error) -> ExitCode {
    let code = e.exit_code();
    let rendered = e.render().to_string();
    let _ = e.print();
    if e.use_stderr() && !rendered.contains("Usage:") {
        let sub = std::env::args().nth(1);
        eprintln!("\n{}", usage_for(sub.as_deref()));
    }
    ExitCode::from(u8::try_from(code).unwrap_or(2))
}

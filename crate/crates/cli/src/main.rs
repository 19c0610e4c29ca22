//! `oufutures`: simulate, fit, filter, smooth, evaluate and forecast
//! two-factor futures panels from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use oufutures::estimation::FitConfig;
use oufutures::evaluation::Split;
use oufutures::{Error, InitMode, MaturityMode, TRADING_DAY};

#[derive(Debug, Parser)]
#[command(name = "oufutures", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a panel and its true states from a parameter file.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit of a panel.
    Fit(FitArgs),
    /// Filtered states and log-likelihood.
    Filter(StateArgs),
    /// Smoothed states and log-likelihood.
    Smooth(StateArgs),
    /// Per-contract RMSE and cross-sections.
    Evaluate(EvaluateArgs),
    /// Log-price curve implied by a state.
    Forecast(ForecastArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// Step between panel rows, in years.
    #[arg(long, default_value_t = TRADING_DAY)]
    dt: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter file with one `name=value` line per parameter.
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_dates: usize,
    #[arg(long, default_value_t = 10)]
    n_contracts: usize,
    #[arg(long, default_value = "constant", value_parser = parse_from_str::<MaturityMode>)]
    maturity_mode: MaturityMode,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Panel CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid levels: one count for every parameter, or ten comma-separated counts.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    grid_points: Vec<usize>,
    /// Maximum number of grid points evaluated.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    /// Number of grid points used as optimizer starts.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value = "stationary", value_parser = parse_from_str::<InitMode>)]
    init: InitMode,
}

#[derive(Debug, Args)]
struct StateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, default_value = "stationary", value_parser = parse_from_str::<InitMode>)]
    init: InitMode,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    theta: PathBuf,
    /// Contract split, e.g. `in=1..13,out=14..20` (1-based, inclusive).
    /// Defaults to that split clipped to the panel width.
    #[arg(long, value_parser = parse_from_str::<Split>)]
    split: Option<Split>,
    /// Dates for cross-sections (comma-separated ISO dates). Defaults to the last date.
    #[arg(long, value_delimiter = ',')]
    dates: Vec<NaiveDate>,
    #[arg(long, default_value = "stationary", value_parser = parse_from_str::<InitMode>)]
    init: InitMode,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    chi: f64,
    #[arg(long, allow_hyphen_values = true)]
    xi: f64,
    /// Maturities in years (comma-separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "n_contracts")]
    maturities: Vec<f64>,
    /// Monthly maturities 1/12 .. n/12 instead of an explicit list.
    #[arg(long)]
    n_contracts: Option<usize>,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig, Error> {
        let grid_points = match self.grid_points.as_slice() {
            [g] => [*g; 10],
            many if many.len() == 10 => many.try_into().expect("length checked"),
            other => {
                return Err(Error::Argument(format!(
                    "--grid-points takes 1 or 10 values, got {}",
                    other.len()
                )))
            }
        };
        let config = FitConfig {
            grid_points,
            budget: self.budget,
            top_k: self.top_k,
            seed: self.seed,
            init: self.init,
            ..FitConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) => 2,
        Error::Parse { .. } => 3,
        Error::Domain(_) => 4,
        Error::Numerical { .. } => 5,
        Error::Estimation(_) => 6,
        Error::Io(_) | Error::Csv(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Filter(a) => commands::states(&a, false),
        Command::Smooth(a) => commands::states(&a, true),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Forecast(a) => commands::forecast(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use condgen_cli::commands::{self, ForecastCommand, Options};
use condgen_cli::CliError;

#[derive(Parser)]
#[command(name = "condgen", version, about = "Conditional scenario generation with Gaussian state-space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic conditional forecast: means and bands.
    Forecast(Common),
    /// Conditional simulation of scenario paths.
    Simulate(Common),
    /// Forecast over a set of parameter samples.
    Mixture(Common),
    /// Fit a Nelson-Siegel curve to a yield panel.
    FitNs(Common),
    /// Estimate the macro VAR by SUR.
    EstimateVar(Common),
    /// Estimate the macro-to-factor link.
    EstimateLink(Common),
    /// Compare Black-Litterman against the scenario pipeline.
    BlCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated band levels, e.g. "0.05,0.95".
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<f64>>,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options { config: c.config, seed: c.seed, paths: c.paths, out: c.out, bands: c.bands }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CONDGEN_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("CONDGEN_THREADS={raw:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(command: Command) -> condgen_cli::Result<()> {
    match command {
        Command::Forecast(c) => commands::run_forecast(ForecastCommand::Forecast, &c.into()),
        Command::Simulate(c) => commands::run_forecast(ForecastCommand::Simulate, &c.into()),
        Command::Mixture(c) => commands::run_forecast(ForecastCommand::Mixture, &c.into()),
        Command::FitNs(c) => commands::fit_ns(&c.into()),
        Command::EstimateVar(c) => commands::estimate_var(&c.into()),
        Command::EstimateLink(c) => commands::estimate_link(&c.into()),
        Command::BlCheck(c) => {
            let r = commands::bl_check(&c.into())?;
            println!(
                "bl-check: {} instance(s), max discrepancy {:.3e} (mean {:.3e}, covariance {:.3e}), tolerance {:.0e}",
                r.n_instances, r.max_discrepancy, r.max_mean_discrepancy, r.max_cov_discrepancy, r.tolerance
            );
            if r.max_discrepancy > r.tolerance {
                return Err(CliError::Check(format!("discrepancy {:.3e} exceeds {:.0e}", r.max_discrepancy, r.tolerance)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pkf_cli::{commands, CliError, Experiment, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pkf", version, about = "Poisson Kalman filter experiments on SIR/SIRH models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Print and save the daily rates derived from the epidemiological inputs.
    DeriveParams,
    /// Closed-form and numeric equilibria.
    SteadyState,
    /// Simulate one truth trajectory with Poisson observations.
    Simulate,
    /// Simulate, then run every configured filter on the same data.
    Filter,
    /// RMSE and 2-sigma coverage over noise multipliers and trials.
    Benchmark,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration: uganda_sir, uganda_sirh, contagious, contagious_lowrate.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the number of trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Override the number of time steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = cli.common;
    let cfg = match (&c.config, &c.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(CliError::Config("pass --config <path> or --preset <name>".into())),
    };
    let cfg = cfg.apply(&Overrides {
        seed: c.seed,
        out: c.out,
        trials: c.trials,
        steps: c.steps,
    })?;
    let exp = Experiment::new(cfg)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match cli.command {
        Command::DeriveParams => commands::derive_params(&exp, &mut w).map(drop),
        Command::SteadyState => commands::steady_state(&exp, &mut w).map(drop),
        Command::Simulate => commands::simulate(&exp, &mut w).map(drop),
        Command::Filter => commands::filter(&exp, &mut w).map(drop),
        Command::Benchmark => commands::benchmark(&exp, &mut w).map(drop),
    }?;
    w.flush().map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pkf: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}

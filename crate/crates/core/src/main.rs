use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use risbo::experiments::{emit_results, run_scenario, ExperimentConfig, Scenario};

/// Experiment runner for CSI-free RIS transmission design.
///
/// Log verbosity follows `RUST_LOG` (e.g. `RUST_LOG=info`).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config and write CSV results.
    Run {
        config: PathBuf,
        /// Override the scenario named in the config.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of Monte Carlo realizations.
        #[arg(long)]
        realizations: Option<usize>,
        /// Output CSV path (defaults to the config's `output`, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> risbo::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok ({})", config.display(), cfg.scenario);
        }
        Command::Run {
            config,
            scenario,
            seed,
            realizations,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = realizations {
                cfg.realizations = r;
            }
            let table = run_scenario(&cfg)?;
            match out.or(cfg.output) {
                Some(path) => {
                    emit_results(&table, &path)?;
                    log::info!("wrote {} rows to {}", table.len(), path.display());
                }
                None => print!("{}", table.to_csv_string()?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

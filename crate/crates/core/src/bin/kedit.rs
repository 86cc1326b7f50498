use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kedit::harness::{self, ExperimentConfig};
use kedit::Error;

/// Knowledge-editing experiments on synthetic linear associative memories.
#[derive(Parser)]
#[command(name = "kedit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Print the registered experiment names.
    ListExperiments,
    /// Parse and validate a config, printing the resolved form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(
    path: &Path,
    seed: Option<u64>,
    experiment: Option<String>,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = harness::load_config(path)?;
    if let Some(name) = experiment {
        cfg.experiment = name;
    }
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListExperiments => {
            for name in harness::EXPERIMENTS {
                println!("{name}");
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config, None, None)?;
            print!("{}", harness::config_to_toml(&cfg)?);
        }
        Command::Run {
            config,
            seed,
            out,
            experiment,
        } => {
            let mut cfg = load(&config, seed, experiment)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let threads = harness::configure_threads()?;
            let report = harness::run_experiment(&cfg)?;
            let files = harness::emit_report(&report, &cfg.output_dir)?;
            eprintln!(
                "{} (seed {}, {threads} thread(s)) finished in {:.2}s",
                report.experiment,
                report.seed,
                report.timings.get("total").copied().unwrap_or_default()
            );
            for (name, value) in &report.metrics {
                println!("{name} = {value}");
            }
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `uavfl`: run, sweep and inspect UAV federated learning scenarios.
//!
//! Exit codes: 0 on success, 1 for configuration or validation errors,
//! 2 for I/O failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavfl::telemetry::Format;

#[derive(Debug, Parser)]
#[command(name = "uavfl", version, about = "UAV-hosted federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Scenario TOML file. Built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `training.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and run one scenario, writing per-round telemetry.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Worker threads for local updates (1 runs sequentially).
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run one scenario per value of a config key.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        sweep_key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        sweep_values: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Check a config and report every violation.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print uplink/downlink SNR and rate for a list of horizontal distances.
    RateTable {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated horizontal distances in meters.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        r_values: Vec<String>,
    },
    /// Print the built-in default config as TOML.
    DefaultConfig {
        /// Use synthetic data instead of MNIST files.
        #[arg(long)]
        synthetic: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run {
            cfg,
            out,
            format,
            threads,
        } => commands::run(&cfg, out.as_deref(), format, threads),
        Command::Sweep {
            cfg,
            sweep_key,
            sweep_values,
            out,
            format,
        } => commands::sweep(&cfg, &sweep_key, &sweep_values, &out, format),
        Command::Validate { cfg } => commands::validate(&cfg),
        Command::RateTable { cfg, r_values } => commands::rate_table(&cfg, &r_values),
        Command::DefaultConfig { synthetic } => {
            let cfg = if synthetic {
                uavfl::ScenarioConfig::synthetic()
            } else {
                uavfl::ScenarioConfig::default()
            };
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

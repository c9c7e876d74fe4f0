use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vinrs_cli::checks::gradient_check;
use vinrs_cli::config::seed_offset_from_env;
use vinrs_cli::plotdata::plotdata;
use vinrs_cli::{run, selfcheck, ConfigError, EnvKind, EnvSpec, ExperimentConfig, SelfcheckOptions};
use vinrs_core::env::write_map;

#[derive(Parser)]
#[command(name = "vinrs", version, about = "Reward shaping with value-iteration network potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured (mode, seed) pair and write CSV curves.
    Run { config: PathBuf },
    /// Oracle, gradient, planning, message and invariance checks.
    Selfcheck,
    /// Turn a directory of run CSVs into `<mode>.dat` plot files.
    Plotdata { dir: PathBuf },
    /// Finite-difference gradient check of the full network.
    Gradcheck,
    /// Print a built-in world in map-file format.
    MapDump {
        env: String,
        #[arg(long, default_value_t = 8)]
        n_traps: usize,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        trap_penalty: f64,
        #[arg(long, default_value_t = 7)]
        trap_seed: u64,
    },
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(
                e.downcast_ref::<vinrs_core::Error>(),
                Some(vinrs_core::Error::Config(_) | vinrs_core::Error::Map { .. })
            )
    })
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.offset_seeds(seed_offset_from_env()?)?;
            let out = run(&cfg, |c| {
                let last = c.metrics.last().map_or(0, |m| m.cumulative_steps);
                eprintln!("{} seed {}: {} episodes, {last} steps", c.mode.name(), c.seed, c.metrics.len());
            })?;
            println!("wrote {} files to {}", out.files.len(), cfg.output_dir.display());
            for r in &out.summary {
                println!("{:<15} episode {:>3}: {:.1} ± {:.1} ({} seeds)", r.mode.name(), r.episode, r.mean, r.std, r.seeds);
            }
            Ok(Outcome::Ok)
        }
        Command::Selfcheck => {
            let results = selfcheck(&SelfcheckOptions::default(), |o| println!("{o}"));
            Ok(if results.iter().any(|o| o.failed()) {
                Outcome::CheckFailed
            } else {
                Outcome::Ok
            })
        }
        Command::Plotdata { dir } => {
            for f in plotdata(&dir)? {
                println!("{}", f.display());
            }
            Ok(Outcome::Ok)
        }
        Command::Gradcheck => {
            let o = gradient_check(None);
            println!("{o}");
            Ok(if o.failed() { Outcome::CheckFailed } else { Outcome::Ok })
        }
        Command::MapDump {
            env,
            n_traps,
            trap_penalty,
            trap_seed,
        } => {
            let kind = EnvKind::parse(&env).ok_or_else(|| ConfigError::new(format!("unknown world {env:?}")))?;
            let spec = EnvSpec {
                n_traps,
                trap_penalty,
                trap_seed,
                ..EnvSpec::named(kind)
            };
            let text = write_map(&spec.build()?).context("rendering map")?;
            print!("{text}");
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}

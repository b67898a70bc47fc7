use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbrl_cli::{cmd_eval, cmd_inspect, cmd_train, CliError, RunConfig};
use gbrl_core::envs::EnvKind;

/// Gradient-boosted trees as actor-critic reinforcement learners.
#[derive(Parser)]
#[command(name = "gbrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file (or `preset:<name>`), then write metrics and the model.
    Train {
        config: String,
        /// `--key=value` or `--section.key=value` config overrides.
        #[arg(allow_hyphen_values = true, trailing_var_arg = true)]
        overrides: Vec<String>,
    },
    /// Roll out a saved policy and report reward statistics.
    Eval {
        model: PathBuf,
        #[arg(long, value_parser = parse_env)]
        env: EnvKind,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Act greedily (argmax logits or the Gaussian mean).
        #[arg(long)]
        deterministic: bool,
    },
    /// Print model structure, learning rates and top feature importances.
    Inspect { model: PathBuf },
}

fn parse_env(s: &str) -> Result<EnvKind, String> {
    s.parse().map_err(|e: gbrl_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            cmd_train(&cfg, &mut out)?;
        }
        Command::Eval {
            model,
            env,
            episodes,
            seed,
            deterministic,
        } => {
            cmd_eval(&model, env, episodes, seed, deterministic, &mut out)?;
        }
        Command::Inspect { model } => {
            cmd_inspect(&model, &mut out)?;
        }
    }
    let _ = out.flush();
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.failure.code() as u8)
        }
    }
}

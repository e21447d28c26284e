mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use milstein_mdp::montecarlo::config_hash;

use crate::commands::CommandOutput;
use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(#[from] milstein_mdp::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Validate,
    Stein,
    Simulate,
    Clt,
    Tails,
    Order,
    Drift,
    Bridge,
    Curves,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Stein => "stein",
            Command::Simulate => "simulate",
            Command::Clt => "clt",
            Command::Tails => "tails",
            Command::Order => "order",
            Command::Drift => "drift",
            Command::Bridge => "bridge",
            Command::Curves => "curves",
        }
    }
}

/// Milstein chains, Stein oracles and Monte Carlo checks of CLT and
/// moderate-deviation behaviour.
///
/// Exit status: 0 all checks pass, 1 a check failed, 2 configuration error,
/// 3 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "milstein-mdp", version)]
struct Args {
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set stein.intervals=4096`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = all cores). Does not change any result.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved plan and exit.
    #[arg(long)]
    dry_run: bool,
}

fn run(args: &Args) -> Result<bool, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(t) = args.threads {
        cfg.workers = t;
    }
    let resolved = cfg.resolve()?;
    let name = args.command.name();
    if args.command == Command::Tails {
        commands::tails_precondition(&cfg)?;
    }
    if args.dry_run {
        let plan = commands::plan(name, &cfg, &resolved);
        println!("{}", serde_json::to_string_pretty(&json!({ "plan": plan, "config": cfg.to_value() })).expect("json"));
        return Ok(true);
    }
    let out: CommandOutput = match args.command {
        Command::Validate => commands::validate(&cfg, &resolved)?,
        Command::Stein => commands::stein(&cfg, &resolved)?,
        Command::Simulate => commands::simulate(&cfg, &resolved)?,
        Command::Clt => commands::clt(&cfg, &resolved)?,
        Command::Tails => commands::tails(&cfg, &resolved)?,
        Command::Order => commands::order(&cfg, &resolved)?,
        Command::Drift => commands::drift(&cfg, &resolved)?,
        Command::Bridge => commands::bridge(&cfg, &resolved)?,
        Command::Curves => commands::curves(&cfg, &resolved)?,
    };
    let pass = out.checks.iter().all(|c| c.pass);
    let config = cfg.to_value();
    let summary = json!({
        "command": name,
        "pass": pass,
        "checks": out.checks,
        "results": out.results,
        "config_hash": config_hash(&config),
        "config": config,
    });
    std::fs::create_dir_all(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join(format!("{name}.csv"));
    let summary_path = cfg.output_dir.join(format!("{name}.summary.json"));
    std::fs::write(&csv_path, out.csv)?;
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    for c in &out.checks {
        println!("{:<24} {}", c.name, if c.pass { "ok" } else { "FAILED" });
    }
    println!("wrote {} and {}", csv_path.display(), summary_path.display());
    Ok(pass)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("milstein-mdp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

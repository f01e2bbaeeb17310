//! `cheaptalk`: run one computation described by a TOML config and emit a
//! JSON record per line, plus an optional CSV table.

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use commands::{Failure, Outcome};
use config::{apply_override, Command, RunConfig};

const SEED_ENV: &str = "CHEAPTALK_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "cheaptalk",
    about = "Equilibria of the quadratic cheap-talk game",
    after_help = "Any config leaf can be overridden with --path.to.leaf=value, e.g. --solver.seed=7."
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Write the command's table here (overrides output.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Overrides the config seed and the CHEAPTALK_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Record<'a> {
    command: &'a str,
    config_hash: String,
    result: serde_json::Value,
    wall_clock_ms: u128,
}

/// Splits `--a.b=value` overrides from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut plain = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            Some((key, value)) if key.contains('.') || !["config", "csv", "seed"].contains(&key) => {
                overrides.push((key.to_owned(), value.to_owned()));
            }
            _ => plain.push(arg),
        }
    }
    (plain, overrides)
}

fn load(cli: &Cli, overrides: &[(String, String)]) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", cli.config.display())))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Failure::Config(e.message().to_owned()))?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        raw.parse::<u64>().map_err(|_| Failure::Config(format!("{SEED_ENV}={raw} is not a seed")))?;
        apply_override(&mut table, "solver.seed", &raw).map_err(Failure::Config)?;
    }
    for (key, value) in overrides {
        apply_override(&mut table, key, value).map_err(Failure::Config)?;
    }
    let mut config = RunConfig::from_table(table).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    if cli.csv.is_some() {
        config.output.csv = cli.csv.clone();
    }
    Ok(config)
}

fn write_file(path: &Path, body: impl FnOnce(&mut std::fs::File) -> Result<(), String>) -> Result<(), Failure> {
    let mut file = std::fs::File::create(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    body(&mut file).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn emit(command: Command, config: &RunConfig, outcome: &Outcome, elapsed_ms: u128) -> Result<(), Failure> {
    // Output locations do not change what is computed.
    let identity = RunConfig { output: Default::default(), ..config.clone() };
    let record = Record {
        command: command.name(),
        config_hash: identity.hash(),
        result: outcome.result.clone(),
        wall_clock_ms: elapsed_ms,
    };
    let line = serde_json::to_string(&record).expect("records serialize");
    match &config.output.records {
        Some(path) => write_file(path, |f| writeln!(f, "{line}").map_err(|e| e.to_string()))?,
        None => println!("{line}"),
    }
    match (&config.output.csv, &outcome.table) {
        (Some(path), Some(table)) => write_file(path, |f| table.write(f))?,
        (Some(path), None) => eprintln!("cheaptalk: no table for this result; {} not written", path.display()),
        _ => {}
    }
    Ok(())
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<u8, Failure> {
    let config = load(cli, overrides)?;
    let job = commands::plan(cli.command, &config)?;
    if config.output.csv.is_some() && matches!(cli.command, Command::Classify | Command::Rd) {
        return Err(Failure::Config(format!("`{}` produces no table", cli.command.name())));
    }
    let start = Instant::now();
    let outcome = commands::execute(job)?;
    emit(cli.command, &config, &outcome, start.elapsed().as_millis())?;
    Ok(outcome.code)
}

fn main() -> ExitCode {
    let (plain, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(plain) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_CONFIG } else { commands::EXIT_OK });
        }
    };
    match run(&cli, &overrides) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("cheaptalk: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

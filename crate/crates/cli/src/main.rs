mod args;
mod commands;
mod config;

use std::process::ExitCode;

use crate::args::{Cli, Command};
use crate::commands::RunContext;
use crate::config::FileConfig;
use clap::Parser;

/// Bad flags or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<flowprint::Error>() {
        Some(flowprint::Error::InvalidConfig(_)) => EXIT_USAGE,
        Some(flowprint::Error::Json(e)) if !e.is_data() && !e.is_syntax() && !e.is_eof() => {
            EXIT_INTERNAL
        }
        Some(_) => EXIT_DATA,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_DATA,
        None if err.downcast_ref::<serde_json::Error>().is_some() => EXIT_INTERNAL,
        None => EXIT_DATA,
    }
}

fn init_logging(flag: Option<&str>) {
    let filter = std::env::var("FLOWPRINT_LOG")
        .ok()
        .or_else(|| flag.map(str::to_owned))
        .unwrap_or_else(|| "warn".to_owned());
    env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    init_logging(cli.log_level.as_deref().or(file.log_level.as_deref()));
    let ctx = RunContext {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        seed_given: cli.seed.is_some() || file.seed.is_some(),
        file,
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Featurize(a) => commands::featurize(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}

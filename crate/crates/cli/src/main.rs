mod args;
mod commands;
mod table;

use std::process::ExitCode;

use clap::Parser;
use log::error;

use rfimpute::ampute::AmputeError;
use rfimpute::evaluate::EvalError;
use rfimpute::imputer::ImputeError;
use rfimpute::simgen::SimError;
use rfimpute::tabular::DataError;

use args::{Cli, Command};
use commands::UsageError;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn impute_code(e: &ImputeError) -> u8 {
    match e {
        ImputeError::Config(_) => EXIT_USAGE,
        ImputeError::Forest(_) => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn ampute_code(e: &AmputeError) -> u8 {
    match e {
        AmputeError::DriverCount { .. }
        | AmputeError::MissingOutcome(_)
        | AmputeError::DriverIsTarget(_)
        | AmputeError::NoTargets(_)
        | AmputeError::BadRate(_)
        | AmputeError::Parse(_)
        | AmputeError::OutcomeTargeted(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(e) = err.downcast_ref::<ImputeError>() {
        return impute_code(e);
    }
    if let Some(e) = err.downcast_ref::<AmputeError>() {
        return ampute_code(e);
    }
    if let Some(e) = err.downcast_ref::<EvalError>() {
        return match e {
            EvalError::Impute(e) => impute_code(e),
            EvalError::Ampute(e) => ampute_code(e),
            EvalError::NoRepetitions => EXIT_USAGE,
            _ => EXIT_DATA,
        };
    }
    if let Some(e) = err.downcast_ref::<SimError>() {
        return match e {
            SimError::NoConvergence(_) => EXIT_INTERNAL,
            _ => EXIT_USAGE,
        };
    }
    let data = err.downcast_ref::<DataError>().is_some()
        || err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<csv::Error>().is_some();
    if data {
        EXIT_DATA
    } else {
        EXIT_INTERNAL
    }
}

/// Joins the error chain, skipping causes whose text the message already shows.
fn error_chain(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Ampute(a) => commands::ampute_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a),
        Command::Impute(a) => commands::impute_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Benchmark(a) => commands::benchmark_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

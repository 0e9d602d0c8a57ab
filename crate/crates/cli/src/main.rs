mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};

/// Usage and input errors.
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let Cli { global, command } = Cli::parse();
    let result = match &command {
        Command::Simulate(a) => commands::simulate(&global, a),
        Command::Fit(a) => commands::fit_cmd(&global, a),
        Command::Quality(a) => commands::quality(&global, a),
        Command::Evaluate(a) => commands::evaluate(&global, a),
        Command::Defuzz(a) => commands::defuzz(&global, a),
        Command::Cohort(a) => commands::cohort(&global, a),
        Command::Report(a) => commands::report(&global, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qualrank: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

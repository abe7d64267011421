//! `scmc`: exit status 0 when nothing was found, 1 on a counterexample or
//! violation, 2 when the result is inconclusive, 3 on usage errors.

mod args;
mod commands;
mod render;

use std::fs;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use args::{Cli, Command, Format, OutputArgs};
use commands::{Outcome, UsageError, EXIT_OK, EXIT_USAGE};

fn output_args(command: &Command) -> &OutputArgs {
    match command {
        Command::Check(a) => &a.output,
        Command::Analyze(a) => &a.output,
        Command::Oracle(a) => &a.trace.output,
        Command::Replay(a) => &a.output,
        Command::ValidateAssumptions(a) => &a.output,
    }
}

fn config_json(command: &Command) -> serde_json::Value {
    let (name, body) = match command {
        Command::Check(a) => ("check", json!(a)),
        Command::Analyze(a) => ("analyze", json!(a)),
        Command::Oracle(a) => ("oracle", json!(a)),
        Command::Replay(a) => ("replay", json!(a)),
        Command::ValidateAssumptions(a) => ("validate-assumptions", json!(a)),
    };
    json!({ "command": name, "config": body })
}

fn run(command: &Command) -> Result<Outcome, UsageError> {
    match command {
        Command::Check(a) => commands::check(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Replay(a) => commands::replay_cmd(a),
        Command::ValidateAssumptions(a) => commands::validate(a),
    }
}

fn emit(out: &OutputArgs, body: String) -> Result<(), UsageError> {
    match &out.output {
        Some(path) => fs::write(path, body).map_err(|e| UsageError(format!("{}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&config_json(&cli.command)).expect("config serializes"));
        return ExitCode::from(EXIT_OK);
    }
    let out = output_args(&cli.command);
    let result = run(&cli.command).and_then(|outcome| {
        let body = match out.format {
            Format::Json => format!("{}\n", serde_json::to_string_pretty(&outcome.report)?),
            Format::Text => render::text(&outcome.report),
        };
        emit(out, body)?;
        Ok(outcome.code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

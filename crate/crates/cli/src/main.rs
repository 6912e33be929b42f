mod cli;
mod commands;
mod inputs;
mod manifest;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use hesslens::Error;

use cli::{Cli, Command, Scope};

/// Scope combinations that parse but that the command does not accept.
fn check_usage(cmd: &Command) -> Result<(), String> {
    match cmd {
        Command::Trace(a) if matches!(a.scope, Scope::Layer(_)) => {
            Err("trace accepts --scope full or --scope layers".into())
        }
        Command::Deltas(a) if a.scope == Scope::Layers => {
            Err("deltas accepts --scope full or --scope layer:K".into())
        }
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = check_usage(&cli.command) {
        let _ = Cli::command()
            .error(clap::error::ErrorKind::ArgumentConflict, msg)
            .print();
        return ExitCode::from(2);
    }
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Refused(_) => 3,
                _ => 1,
            })
        }
    }
}

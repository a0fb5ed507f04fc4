//! `thir`: extract, query, evaluate, curves and serve.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};

fn init_logging(level: Option<args::LogLevel>) {
    let env = env_logger::Env::new().filter_or("THIR_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level.as_str());
    }
    builder.format_timestamp(None).init();
}

/// Usage line of the subcommand named on the command line, or of `thir`.
fn synopsis() -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let name = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    match name.and_then(|n| cmd.find_subcommand(&n).cloned()) {
        Some(mut sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    if !e.render().to_string().contains("Usage:") {
                        eprintln!("\n{}", synopsis());
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    init_logging(cli.log_level);
    let jobs = cli
        .jobs
        .map(usize::from)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let result = match cli.command {
        Command::Extract(a) => commands::extract(a, jobs),
        Command::Query(a) => commands::query(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a, jobs),
        Command::Curves(a) => commands::curves(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

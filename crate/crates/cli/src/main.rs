mod cli;
mod cmd;
mod config;
mod output;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use cli::{AbstractCommand, Cli, Command, ExperimentCommand};
use output::Run;

/// A problem with how the tool was invoked (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn out_dir(command: &Command) -> &std::path::Path {
    match command {
        Command::Ingest(a) => &a.common.out_dir,
        Command::Sample(a) => &a.common.out_dir,
        Command::Estimate(a) => &a.common.out_dir,
        Command::Evaluate(a) => &a.common.out_dir,
        Command::Experiment(ExperimentCommand::Improve(a)) => &a.common.out_dir,
        Command::Experiment(ExperimentCommand::Subsample(a)) => &a.common.out_dir,
        Command::Experiment(ExperimentCommand::Token(a)) => &a.common.out_dir,
        Command::Regress(a) => &a.common.out_dir,
        Command::Abstract(AbstractCommand::Syn(a)) => &a.common.out_dir,
        Command::Abstract(AbstractCommand::Sem(a)) => &a.common.out_dir,
        Command::Report(a) => &a.common.out_dir,
    }
}

fn run(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    let mut run = Run::new(out_dir(&cli.command), argv)?;
    let result = match &cli.command {
        Command::Ingest(a) => cmd::data::ingest(a, &mut run),
        Command::Sample(a) => cmd::data::sample(a, &mut run),
        Command::Estimate(a) => cmd::data::estimate(a, &mut run),
        Command::Evaluate(a) => cmd::analysis::evaluate_cmd(a, &mut run),
        Command::Experiment(ExperimentCommand::Improve(a)) => cmd::analysis::improve(a, &mut run),
        Command::Experiment(ExperimentCommand::Subsample(a)) => cmd::analysis::subsample(a, &mut run),
        Command::Experiment(ExperimentCommand::Token(a)) => cmd::analysis::token(a, &mut run),
        Command::Regress(a) => cmd::analysis::regress(a, &mut run),
        Command::Abstract(AbstractCommand::Syn(a)) => cmd::abstraction::syn(a, &mut run),
        Command::Abstract(AbstractCommand::Sem(a)) => cmd::abstraction::sem(a, &mut run),
        Command::Report(a) => cmd::report::report(a, &mut run),
    };
    // The manifest is written even when the command fails part-way, so
    // partial artifacts stay traceable.
    let finished = run.finish();
    result.and(finished)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let raw: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let argv: Vec<String> = raw.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let expanded = match config::expand(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

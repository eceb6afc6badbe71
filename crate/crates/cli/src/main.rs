mod args;
mod commands;
mod config;
mod report;
mod specs;

use anyhow::Result;
use clap::{CommandFactory, FromArgMatches};

use args::Cli;
use report::Report;

fn run() -> Result<()> {
    // repeated flags (config entries, then the user's) resolve to the last one
    let cmd = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    let argv = config::expand(std::env::args_os().collect(), &cmd)?;
    let matches = cmd.try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let mut report = Report::new(name, sub);

    with_threads(cli.threads, || commands::run(&cli.command, cli.seed, &mut report))??;

    if let Some(path) = &cli.report {
        report.write(path)?;
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;
use driftlab::{lattice, par, Exec};

use config::{Cli, RunConfig};
use error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::validation("usage", e.kind().to_string());
            eprintln!("{err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Ok(v) = std::env::var("DRIFTLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::validation("threads", format!("DRIFTLAB_THREADS must be a positive integer, got {v:?}")))?;
        par::init_threads(n);
    }
    let (command, output, cache_max) = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation("usage", "give either --config or a subcommand, not both"));
        }
        (None, None) => return Err(CliError::validation("usage", "no subcommand given")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::validation("io", format!("cannot read {}: {e}", path.display())))?;
            let cfg = RunConfig::parse(&text)?;
            (cfg.command, cli.output.or(cfg.output), cli.cache_max.or(cfg.lattice.cache_max))
        }
        (None, Some(cmd)) => (cmd, cli.output, cli.cache_max),
    };
    if let Some(m) = cache_max {
        lattice::set_cache_max(m);
    }
    let artifact = commands::run(&command, Exec::default())?;
    let text = artifact.render();
    match output {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CliError::validation("io", format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

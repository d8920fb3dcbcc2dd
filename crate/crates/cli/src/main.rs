mod commands;
mod config;
mod provenance;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Effective};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config values or config file.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Op(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Op(_) => 1,
        }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("marf: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Effective::resolve(&cli.hyper)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Op(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Ctx { cfg: &cfg, quiet: cli.hyper.quiet };
    commands::run(cli.command, &ctx)
}

//! Command-line driver: resolves a [`RunConfig`] from defaults, an optional
//! config file and flags, records it in the output directory, and runs the
//! matching pipeline stage.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on anything else with a
//! single `error: kind=<kind> msg=<message>` line on stderr.

pub mod args;
mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
pub use crate::config::{Command, RunConfig, RUN_CONFIG_FILE};
pub use crate::error::{CliError, Result};

/// Reads a run config, rejecting unknown keys.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Merges defaults, the `--config` file and flags.
pub fn resolve(cli: Cli) -> Result<RunConfig> {
    let name = cli.command.name();
    let mut rc = match &cli.config {
        Some(path) => {
            let rc = load_run_config(path)?;
            if rc.command.name() != name {
                return Err(CliError::CommandMismatch {
                    expected: name.to_string(),
                    found: rc.command.name().to_string(),
                });
            }
            rc
        }
        None => RunConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: 0,
            out_dir: "out".into(),
            command: cli.command.default_command(),
        },
    };
    rc.version = env!("CARGO_PKG_VERSION").to_string();
    if let Some(seed) = cli.seed {
        rc.seed = seed;
    }
    if let Some(out) = cli.out {
        rc.out_dir = out;
    }
    cli.command.apply(&mut rc.command);
    Ok(rc)
}

/// Writes the run record into the output directory, then runs it.
pub fn execute(rc: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&rc.out_dir)?;
    let record = serde_json::to_string_pretty(rc).map_err(spkemb::Error::from)? + "\n";
    std::fs::write(rc.out_dir.join(RUN_CONFIG_FILE), record)?;
    log::info!("{} -> {}", rc.command.name(), rc.out_dir.display());
    commands::run(rc)
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let first = e.to_string();
                    let first = first
                        .lines()
                        .next()
                        .unwrap_or("")
                        .trim_start_matches("error: ");
                    eprintln!("error: kind=usage msg={first}");
                    2
                }
            };
        }
    };
    match resolve(cli).and_then(|rc| execute(&rc)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.one_line());
            1
        }
    }
}

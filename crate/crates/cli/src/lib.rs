//! The `verbsense` command line.
//!
//! Exit codes: `0` success, `2` usage (bad flags or config), `3` invalid
//! input (malformed or missing files, violated invariants), `4` runtime
//! failure (file system, network).

mod args;
mod commands;
mod config;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;
use verbsense::acquire::AcquireError;
use verbsense::cluster::ClusterError;
use verbsense::eval::EvalError;
use verbsense::io::FormatError;
use verbsense::metrics::MetricError;
use verbsense::ModelError;

pub use args::Cli;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// A flag or config problem detected after argument parsing.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match commands::dispatch(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(f) = cause.downcast_ref::<FormatError>() {
            return match f {
                FormatError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(a) = cause.downcast_ref::<AcquireError>() {
            return match a {
                AcquireError::GoldOutsideLexicon(_) => EXIT_VALIDATION,
                AcquireError::MissingCredential(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
        if cause.is::<ModelError>()
            || cause.is::<ClusterError>()
            || cause.is::<EvalError>()
            || cause.is::<MetricError>()
        {
            return EXIT_VALIDATION;
        }
    }
    EXIT_RUNTIME
}

//! `wcam`: wavelet-domain attribution, scale-aware augmentation and
//! provider-shift evaluation from the command line.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 usage or input error,
//! 3 incomplete data (missing scores, empty test set, unpaired entry).

mod attribute;
mod augment;
mod eval;
mod models;
mod output;
mod selftest;
mod serve;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "wcam", version, about = "Wavelet scale attribution for black-box image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attribute a model's score to wavelet-plane regions of each image.
    Attribute(attribute::AttributeArgs),
    /// Blur and/or cancel wavelet coefficients of images.
    Augment(augment::AugmentArgs),
    /// Per-test-set F1 report and source-to-target probability shift.
    Eval(eval::EvalArgs),
    /// Run the built-in oracle checks.
    Selftest(selftest::SelftestArgs),
    /// Expose a built-in model over the scoring protocol (stdio or HTTP).
    #[command(hide = true)]
    Serve(serve::ServeArgs),
}

/// Input data is incomplete rather than malformed (exit code 3).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataIncomplete(pub String);

pub(crate) fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Parses a lowercase serde enum name such as `haar` or `google`.
pub(crate) fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value {s:?}"))
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Attribute(args) => attribute::run(args).map(|()| true),
        Command::Augment(args) => augment::run(args).map(|()| true),
        Command::Eval(args) => eval::run(args).map(|()| true),
        Command::Selftest(args) => selftest::run(args),
        Command::Serve(args) => serve::run(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<DataIncomplete>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

//! `hedonic`: describe listings, pretrain a backbone, extract image
//! features, and fit the price-per-square-foot models.
//!
//! Exit codes: 0 success, 1 other failure, 2 manifest error, 3 training
//! diverged, 4 no property yielded features, 5 split or shape mismatch.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use hedonic_core::Error;

#[derive(Parser, Debug)]
#[command(name = "hedonic", version, about = "Image-augmented hedonic price models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
    /// Name of the run directory instead of `<command>-<timestamp>`
    #[arg(long, global = true)]
    run_name: Option<String>,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print descriptive statistics of a manifest
    Describe,
    /// Self-supervised pretraining on a directory of images
    Pretrain,
    /// Pool per-property image features into a VHFC1 cache
    Extract,
    /// Fit the baseline and image-augmented ridge models and report
    Fit,
    /// Re-print the report and training summary of a run directory
    Report {
        /// Run directory
        run: PathBuf,
    },
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_MANIFEST: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_NO_FEATURES: u8 = 4;
pub const EXIT_SPLIT: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Manifest(_)) => EXIT_MANIFEST,
        Some(Error::Diverged { .. } | Error::NonFinite(_)) => EXIT_DIVERGED,
        Some(Error::NoFeatures) => EXIT_NO_FEATURES,
        Some(Error::Split(_) | Error::Shape(_)) => EXIT_SPLIT,
        _ => EXIT_FAILURE,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let name = cli.run_name.as_deref();
    match cli.command {
        Command::Describe => commands::describe(&cfg),
        Command::Pretrain => commands::pretrain(&cfg, name),
        Command::Extract => commands::extract(&cfg, name),
        Command::Fit => commands::fit(&cfg, name),
        Command::Report { run } => commands::report(&run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FAILURE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        let code = |e: Error| exit_code(&anyhow::Error::new(e));
        assert_eq!(code(Error::Manifest("x".into())), 2);
        assert_eq!(code(Error::Diverged { step: 1, detail: "nan".into() }), 3);
        assert_eq!(code(Error::NoFeatures), 4);
        assert_eq!(code(Error::Split("x".into())), 5);
        assert_eq!(code(Error::Shape("x".into())), 5);
        assert_eq!(code(Error::Cache("x".into())), 1);
        let wrapped = anyhow::Error::new(Error::NoFeatures).context("extracting");
        assert_eq!(exit_code(&wrapped), 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

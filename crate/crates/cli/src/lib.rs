//! `kelly`: batch front end for solving, sweeping, simulating and reporting.
//!
//! Every command writes into an output directory: its result files plus a
//! `manifest.json` that can be handed to `kelly replay`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_atomic, CommandSpec, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "kelly",
    version,
    about = "Decoupled Kelly and mean-variance portfolio toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate a statistics file from a CSV of monthly returns.
    Ingest {
        /// CSV with a header row of asset labels and one row per month.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize one portfolio.
    Solve {
        /// TOML file with any of the flags below; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize over a list of risk parameters (default 0.1,0.3,0.5,0.7,0.9).
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo return-to-risk ratio of a solved portfolio.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Portfolio JSON written by solve or sweep.
        #[arg(long)]
        portfolio: PathBuf,
        /// Also write the simulated single-period returns.
        #[arg(long)]
        write_samples: bool,
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reshape trace, sweep and ratio files into plot-ready CSVs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Result of a command that ran to the point of writing outputs.
#[derive(Debug)]
pub struct RunSummary {
    pub messages: Vec<String>,
    pub written: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// Set when some of the work failed but the rest was written (sweeps).
    pub failure: Option<CliError>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

fn layered(config: Option<&Path>, flags: Settings) -> CliResult<Settings> {
    let file = config.map(Settings::from_file).transpose()?;
    Ok(Settings::layered(file, flags))
}

/// Turns parsed arguments into a command spec and runs it.
pub fn run(cli: Cli) -> CliResult<RunSummary> {
    let (spec, out) = match cli.command {
        Command::Ingest { input, out } => (CommandSpec::Ingest { input }, out),
        Command::Solve {
            config,
            settings,
            out,
        } => (
            CommandSpec::Solve(layered(config.as_deref(), settings)?.resolve_solve(true)?),
            out,
        ),
        Command::Sweep {
            config,
            settings,
            out,
        } => (
            CommandSpec::Sweep(layered(config.as_deref(), settings)?.resolve_solve(false)?),
            out,
        ),
        Command::Simulate {
            config,
            portfolio,
            write_samples,
            settings,
            out,
        } => (
            CommandSpec::Simulate(
                layered(config.as_deref(), settings)?.resolve_simulate(portfolio, write_samples)?,
            ),
            out,
        ),
        Command::Report { inputs, out } => (CommandSpec::Report { inputs }, out),
        Command::Replay { manifest, out } => return replay(&manifest, &out),
    };
    execute(spec, &out, None)
}

/// Re-runs a manifest's command after checking its inputs are unchanged.
pub fn replay(manifest: &Path, out: &Path) -> CliResult<RunSummary> {
    let m = RunManifest::load(manifest)?;
    execute(m.spec, out, Some(&m.inputs))
}

pub fn execute(
    spec: CommandSpec,
    out: &Path,
    expected_inputs: Option<&[manifest::InputRecord]>,
) -> CliResult<RunSummary> {
    let inputs = spec.digest_inputs()?;
    if let Some(expected) = expected_inputs {
        if expected != inputs.as_slice() {
            let changed: Vec<String> = expected
                .iter()
                .filter(|e| !inputs.contains(e))
                .map(|e| e.path.clone())
                .collect();
            return Err(CliError::Data(format!(
                "inputs differ from the manifest: {}",
                changed.join(", ")
            )));
        }
    }
    let manifest = RunManifest::new(spec, inputs)?;
    let r = manifest.reference();
    let rendered = match &manifest.spec {
        CommandSpec::Ingest { input } => commands::ingest(input, &r)?,
        CommandSpec::Solve(s) => commands::solve(s, &r)?,
        CommandSpec::Sweep(s) => commands::sweep(s, &r)?,
        CommandSpec::Simulate(s) => commands::simulate(s, &r)?,
        CommandSpec::Report { inputs } => commands::report(inputs, &r)?,
    };
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("output dir {}: {e}", out.display())))?;
    let mut written = Vec::with_capacity(rendered.outputs.len());
    for o in &rendered.outputs {
        let path = out.join(&o.name);
        write_atomic(&path, &o.bytes)?;
        written.push(path);
    }
    let manifest = manifest.finish(out, &rendered.outputs)?;
    Ok(RunSummary {
        messages: rendered.messages,
        written,
        manifest,
        failure: rendered.partial_failure,
    })
}

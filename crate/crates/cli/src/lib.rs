//! Command-line front end: configuration resolution, subcommands and
//! output rendering.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod render;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{parse_config_text, parse_set, RunConfig};
use crate::error::CliError;
use crate::render::Format;

#[derive(Debug, Parser)]
#[command(
    name = "dpsqkd",
    version,
    about = "Differential-phase-shift QKD link model and simulator"
)]
pub struct Cli {
    /// Named parameter preset (paper-dcr004, paper-dcr001).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// File of `key = value` lines applied before --set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// csv or report.
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, global = true)]
    pub seeds: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Click probability, sifted rate, QBER and secure rate at one loss.
    Analytic,
    /// Monte-Carlo run of the link followed by sifting and distillation.
    Simulate,
    /// Analytic curves over a loss range.
    Sweep,
    /// Model and simulation against the published operating points.
    Reproduce,
    /// Distill a sifted key written by `simulate`.
    Distill {
        /// Sifted-key CSV.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// List the parameter presets.
    Presets,
}

impl Command {
    fn default_seeds(&self) -> u64 {
        match self {
            Command::Reproduce => 8,
            _ => 1,
        }
    }
}

/// Resolves the configuration for `cli` in precedence order.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut overrides = Vec::new();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        overrides.extend(parse_config_text(&text)?);
    }
    for item in &cli.set {
        overrides.push(parse_set(item)?);
    }
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            overrides.push((key.to_string(), v));
        }
    };
    flag("preset", cli.preset.clone());
    flag("output.format", cli.format.clone());
    flag("sim.seed", cli.seed.map(|s| s.to_string()));
    flag("sim.seeds", cli.seeds.map(|s| s.to_string()));
    if let Command::Distill { input } = &cli.command {
        flag("distill.input", input.as_ref().map(|p| p.display().to_string()));
    }
    RunConfig::resolve(&overrides, cli.command.default_seeds())
}

/// Runs the command and returns the rendered output.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve(cli)?;
    let format: Format = cfg.get("output.format").parse().map_err(CliError::Config)?;
    let doc = match &cli.command {
        Command::Analytic => commands::analytic(&cfg)?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
        Command::Reproduce => commands::reproduce(&cfg)?,
        Command::Distill { .. } => commands::distill_file(&cfg)?,
        Command::Presets => commands::presets(&cfg)?,
    };
    doc.render(format)
}

/// Runs and writes to `--output` or stdout.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let text = run(cli)?;
    match &cli.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

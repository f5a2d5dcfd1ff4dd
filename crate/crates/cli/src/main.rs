//! `ale`: fits, influence curves and Monte Carlo experiments for regularized
//! least squares.
//!
//! Exit status: 0 on success, 1 when an experiment verdict fails or a
//! computation breaks down, 2 on usage or configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{run, UsageError};
use crate::config::{parse_config_text, ConfigError, Settings};

#[derive(Parser)]
#[command(name = "ale", version, about = "Regularized M-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator on one dataset.
    Fit(Flags),
    /// Influence curve and moment checks at a fitted parameter.
    Ic(Flags),
    /// One Newton step from a ridge start versus the full smooth solve.
    Onestep(Flags),
    /// Remainder scaling of the linear expansion across a sample-size grid.
    McLinearity(Flags),
    /// Sample covariance of the scaled error against the sandwich formula.
    McNormality(Flags),
    /// Sobolev distances of the smoothed penalty and influence-curve convergence in m.
    ApproxCheck(Flags),
    /// Pairwise ranking fit with a smooth penalty.
    RankFit(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Fit(f) => ("fit", f),
            Command::Ic(f) => ("ic", f),
            Command::Onestep(f) => ("onestep", f),
            Command::McLinearity(f) => ("mc-linearity", f),
            Command::McNormality(f) => ("mc-normality", f),
            Command::ApproxCheck(f) => ("approx-check", f),
            Command::RankFit(f) => ("rank-fit", f),
        }
    }
}

#[derive(Args)]
struct Flags {
    /// Config file of `key = value` lines; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    /// Comma-separated ascending sample sizes.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    /// Worker thread cap for replications.
    #[arg(long)]
    threads: Option<String>,
    /// Dataset CSV with header `x1,...,xp,y`.
    #[arg(long)]
    data: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let named = [
            ("out", &self.out),
            ("seed", &self.seed),
            ("n", &self.n),
            ("p", &self.p),
            ("lambda", &self.lambda),
            ("lambda2", &self.lambda2),
            ("m", &self.m),
            ("reps", &self.reps),
            ("n_grid", &self.n_grid),
            ("estimator", &self.estimator),
            ("threads", &self.threads),
            ("data", &self.data),
        ];
        let mut out: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("--set expects KEY=VALUE, got '{kv}'"),
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        out.extend(named.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))));
        Ok(out)
    }
}

fn settings(flags: &Flags) -> anyhow::Result<Settings> {
    let mut layers = Vec::new();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        layers.extend(parse_config_text(&text)?);
    }
    layers.extend(flags.overrides()?);
    Ok(Settings::build(layers)?)
}

fn is_usage(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<UsageError>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<ale_core::Error>(),
        Some(
            ale_core::Error::InvalidArgument(_)
                | ale_core::Error::InvalidSpec(_)
                | ale_core::Error::InvalidDataset(_)
                | ale_core::Error::DimensionMismatch { .. }
        )
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (name, flags) = cli.command.parts();
    let outcome = settings(flags).and_then(|s| run(name, s));
    match outcome {
        Ok(verdicts) => {
            let failed: Vec<_> = verdicts.iter().filter(|v| !v.passed).collect();
            for v in &verdicts {
                println!("{}: {} ({})", v.name, if v.passed { "pass" } else { "FAIL" }, v.detail);
            }
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for v in failed {
                    eprintln!("verdict failed: {}: {}", v.name, v.detail);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rolldiag::commands;
use rolldiag::RunConfig;

/// Diagnostics for staggered-rollout cross-sectional designs.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for placebo runs; overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate every configured specification.
    Fit,
    /// Placebo distributions, design effects and randomization p-values.
    Placebo,
    /// Survey-time curves and linear trends by birth cohort.
    Trends,
    /// Write a synthetic dataset, optionally with a mechanism report.
    Simulate,
    /// Resolve follow-up districts to rollout years through the concordance.
    Concord,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => match cli.command {
            // simulate runs on defaults alone
            Cmd::Simulate => RunConfig::from_toml("")?,
            _ => anyhow::bail!("--config is required for this command"),
        },
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = cli.out {
        cfg.output = o;
    }
    let written = match cli.command {
        Cmd::Fit => commands::cmd_fit(&cfg)?,
        Cmd::Placebo => commands::cmd_placebo(&cfg)?,
        Cmd::Trends => commands::cmd_trends(&cfg)?,
        Cmd::Simulate => commands::cmd_simulate(&cfg)?,
        Cmd::Concord => commands::cmd_concord(&cfg)?,
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

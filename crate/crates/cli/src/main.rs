use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vefs_core::harness::{self, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "vefs", version, about = "Viscoelastic free-surface flow scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a config file.
    Run {
        config: PathBuf,
        /// Scenario to run instead of the one named in the config.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// `section.key=value`, applied after the file (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory (default: `[run] out`, else `out/<scenario>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for a freshly generated lemma corpus.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(config: PathBuf, scenario: Option<Scenario>, mut overrides: Vec<String>, out: Option<PathBuf>, seed: Option<u64>) -> Result<bool> {
    let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = scenario {
        overrides.push(format!("run.scenario={}", s.name()));
    }
    if let Some(s) = seed {
        overrides.push(format!("run.seed={s}"));
    }
    let mut cfg = RunConfig::parse(&text, &overrides).with_context(|| format!("in {}", config.display()))?;
    if let Some(o) = out {
        cfg.out = Some(o);
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
    let report = harness::run(&cfg, &dir).with_context(|| format!("scenario {}", cfg.scenario.name()))?;
    for c in &report.checks {
        println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("artifacts in {}", dir.display());
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, scenario, overrides, out, seed } => run(config, scenario, overrides, out, seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

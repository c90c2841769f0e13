//! `v2g-insure` — runs the learning, sweep, value-of-information, economics
//! and gradient-check experiments from one JSON config.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use v2g_insure::baselines::PolicyKind;
use v2g_insure::harness::{self, ExperimentConfig, SweepAxis};

#[derive(Parser, Debug)]
#[command(name = "v2g-insure", version, about = "PEV charging with cyber-insurance: learning and analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; omitted sections (or the whole file) take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the learner and record convergence next to both baselines.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of learning periods.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Train and evaluate all three policies across one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// consumption_rate, unavail_prob or premium.
        #[arg(long)]
        axis: Option<SweepAxis>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Value of price information versus number of stations.
    Voi {
        #[command(flatten)]
        common: Common,
    },
    /// Premium, self-protection and interdependent-security calculators.
    Econ {
        #[command(flatten)]
        common: Common,
    },
    /// Check the exact gradient against finite differences; exits nonzero on failure.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(harness::create_output(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { common, iterations } => {
            let mut cfg = load(&common)?;
            if let Some(n) = iterations {
                cfg.learner.iterations = n;
            }
            let result = harness::run_train(&cfg)?;
            harness::write_train_csv(&cfg, &result, output(common.out.as_deref())?)?;
            if let Some(out) = &common.out {
                let policy_path = harness::sibling_path(out, "policy");
                harness::write_policy_csv(&cfg, &result.theta, harness::create_output(&policy_path)?)
                    .with_context(|| format!("writing {}", policy_path.display()))?;
            }
            for (kind, value) in result.finals() {
                let what = if kind == PolicyKind::Learned { "psi_tilde" } else { "mean cost" };
                eprintln!("{:>2} final {what}: {value:.4}", kind.label());
            }
            eprintln!("config_hash={} seed={}", cfg.hash(), cfg.seed);
        }
        Command::Sweep {
            common,
            axis,
            iterations,
        } => {
            let mut cfg = load(&common)?;
            if let Some(axis) = axis {
                if axis != cfg.sweep.axis {
                    cfg.sweep.axis = axis;
                    cfg.sweep.values.clear();
                }
            }
            if let Some(n) = iterations {
                cfg.learner.iterations = n;
            }
            cfg.validate()?;
            let points = harness::run_sweep(&cfg)?;
            harness::write_sweep_csv(&cfg, &points, output(common.out.as_deref())?)?;
        }
        Command::Voi { common } => {
            let cfg = load(&common)?;
            let tables = harness::run_voi(&cfg)?;
            harness::write_voi_csv(&cfg, &tables, output(common.out.as_deref())?)?;
        }
        Command::Econ { common } => {
            let cfg = load(&common)?;
            let report = harness::run_econ(&cfg)?;
            harness::write_econ_csv(&cfg, &report, output(common.out.as_deref())?)?;
        }
        Command::Verify { common } => {
            let cfg = load(&common)?;
            let report = harness::run_verify(&cfg)?;
            harness::write_verify_report(&cfg, &report, output(common.out.as_deref())?)?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

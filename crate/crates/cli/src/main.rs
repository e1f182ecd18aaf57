//! `morphcl` command line: run sweeps, rebuild reports, check the acceptance suite.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{error, info};
use morphcl::engine::Condition;
use morphcl::harness::{emit_reports, load_summaries, run_experiment, ExperimentKind, RunConfig};

#[derive(Parser)]
#[command(name = "morphcl", version, about = "Continual learning with weight and architecture adaptation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every condition under every seed and write logs and reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the bundled reduced-scale configuration.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        experiment: Option<ExperimentKind>,
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<Condition>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ab_epochs: Option<usize>,
    },
    /// Rebuild the CSV/SVG reports from the run summaries in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run a named check suite.
    Verify {
        #[arg(long, default_value = "acceptance")]
        suite: String,
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
    Acceptance,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Run(_) => 2,
            Failure::Acceptance => 3,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    config: Option<PathBuf>,
    desk: bool,
    experiment: Option<ExperimentKind>,
    conditions: Option<Vec<Condition>>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    ab_epochs: Option<usize>,
) -> anyhow::Result<RunConfig> {
    let mut cfg = match (config, desk) {
        (Some(_), true) => bail!("--config and --desk are mutually exclusive"),
        (Some(p), false) => RunConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
        (None, true) => RunConfig::desk(),
        (None, false) => RunConfig::default(),
    };
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(c) = conditions {
        cfg.conditions = c;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(n) = ab_epochs {
        cfg.engine.ab.epochs = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, desk, experiment, conditions, seeds, out, ab_epochs } => {
            let cfg = build_config(config, desk, experiment, conditions, seeds, out, ab_epochs).map_err(Failure::Config)?;
            info!("{}: {} runs into {}", cfg.experiment.name(), cfg.conditions.len() * cfg.seeds.len(), cfg.out_dir.display());
            let art = run_experiment(&cfg).map_err(|e| Failure::Run(e.into()))?;
            print!("{}", std::fs::read_to_string(art.out_dir.join("summary.csv")).unwrap_or_default());
            if !art.all_ok() {
                return Err(Failure::Run(anyhow::anyhow!("some runs failed; see the summaries")));
            }
            Ok(())
        }
        Command::Report { input } => {
            let summaries = load_summaries(&input)
                .with_context(|| format!("reading {}", input.display()))
                .map_err(Failure::Config)?;
            if summaries.is_empty() {
                return Err(Failure::Config(anyhow::anyhow!("no run summaries in {}", input.display())));
            }
            for p in emit_reports(&input, &summaries).map_err(|e| Failure::Run(e.into()))? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Verify { suite, only } => {
            if suite != "acceptance" {
                return Err(Failure::Config(anyhow::anyhow!("unknown suite {suite:?}")));
            }
            let results = morphcl::verify::run_acceptance(only.as_deref());
            for r in &results {
                println!("{r}");
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Failure::Acceptance)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => error!("config: {e:#}"),
                Failure::Run(e) => error!("run: {e:#}"),
                Failure::Acceptance => error!("acceptance suite failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

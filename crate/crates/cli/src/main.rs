//! `slfv`: run experiments from TOML configs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error, 3 result
//! dominated by truncated trials.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slfv::error::Error;
use slfv::harness::{run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "slfv", version, about = "Spatial Lambda-Fleming-Viot experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the escape probability over a list of n.
    Kappa(RunArgs),
    /// Simulate excursions of a pair of lineages.
    Excursions(RunArgs),
    /// Simulate single caterpillars and their lifetime statistics.
    Caterpillar(RunArgs),
    /// Simulate branching caterpillar forests.
    Forest(RunArgs),
    /// Compare caterpillar forests with branching Brownian motion.
    BbmCompare(RunArgs),
    /// Check forward/dual moment agreement on the torus.
    Duality(RunArgs),
    /// Single-lineage diffusion constant.
    Diffusion(RunArgs),
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
}

fn expected_kind(cmd: &Command) -> Option<ExperimentKind> {
    Some(match cmd {
        Command::Kappa(_) => ExperimentKind::KappaSweep,
        Command::Excursions(_) => ExperimentKind::ExcursionStudy,
        Command::Caterpillar(_) => ExperimentKind::CaterpillarStudy,
        Command::Forest(_) => ExperimentKind::Forest,
        Command::BbmCompare(_) => ExperimentKind::ForestVsBbm,
        Command::Duality(_) => ExperimentKind::DualityCheck,
        Command::Diffusion(_) => ExperimentKind::SingleLineageDiffusion,
        Command::ValidateConfig { .. } => return None,
    })
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let kind = expected_kind(&cli.command);
    let args = match cli.command {
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {:?} config hash {}", cfg.kind, cfg.hash());
            return Ok(ExitCode::SUCCESS);
        }
        Command::Kappa(a)
        | Command::Excursions(a)
        | Command::Caterpillar(a)
        | Command::Forest(a)
        | Command::BbmCompare(a)
        | Command::Duality(a)
        | Command::Diffusion(a) => a,
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let kind = kind.expect("run subcommand");
    if cfg.kind != kind {
        return Err(Error::Config {
            path: "kind".into(),
            message: format!("config is {:?} but the subcommand runs {:?}", cfg.kind, kind),
        });
    }
    let out = args.out.or_else(|| cfg.output.clone());
    let record = run_experiment(&cfg, out.as_deref())?;
    println!("{}", String::from_utf8_lossy(&record.summary_bytes()).trim_end());
    if let Some(dir) = &out {
        eprintln!("wrote {} (content id {})", dir.display(), record.content_id);
    }
    if record.truncation_dominated() {
        eprintln!("warning: {} of {} trials truncated", record.truncated, record.total);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

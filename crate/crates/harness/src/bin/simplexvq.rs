use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use simplexvq_harness::checkpoint::Checkpoint;
use simplexvq_harness::eval::{evaluate, export_assignment_scatter};
use simplexvq_harness::gradcheck::{run_suite, DEFAULT_EPS, DEFAULT_INSTANCES, DEFAULT_TOL};
use simplexvq_harness::runlog::RUN_DIR_ENV;
use simplexvq_harness::train::{datasets, eval_seed};
use simplexvq_harness::{demo, train, RunConfig};

#[derive(Parser)]
#[command(name = "simplexvq", version, about = "Train and inspect toy vector quantizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config and write logs plus a checkpoint.
    Train {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to $SIMPLEXVQ_RUN_DIR, then runs/<task>-<hash>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the eval split generated from a config.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare tape gradients with central differences.
    GradCheck {
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: usize,
    },
    /// Evaluate the collapse losses on four M = 3 clouds and export scatter files.
    SimplexDemo {
        #[arg(long, default_value = "simplex-demo")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export per-group assignment probabilities of a checkpoint (M = 3 only).
    ExportScatter {
        checkpoint: PathBuf,
        #[arg(long, default_value = "scatter")]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let dir = out
                .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs").join(format!("{:?}-{}", cfg.task, &cfg.hash()[..8]).to_lowercase()));
            let outcome = train(&cfg, Some(&dir))?;
            if let Some(last) = outcome.records.last() {
                println!("{}", serde_json::to_string(last)?);
            }
            println!("run directory: {}", dir.display());
            Ok(true)
        }
        Command::Eval { checkpoint, config, seed } => {
            let cfg = load_config(&config, seed)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let model = ckpt.model()?;
            let (_, eval_data) = datasets(&cfg)?;
            let metrics = evaluate(&model, &cfg, eval_data.as_eval(), eval_seed(cfg.seed))?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(true)
        }
        Command::GradCheck { tol, eps, instances } => {
            if instances == 0 {
                bail!("--instances must be at least 1");
            }
            let report = run_suite(eps, tol, instances)?;
            println!("{report}");
            Ok(report.passed())
        }
        Command::SimplexDemo { out, seed } => {
            let report = demo::run_demo(seed, Some(&out))?;
            println!("{report}");
            println!("scatter files: {}", out.display());
            Ok(report.ppl_pattern_holds() && report.knn_pattern_holds())
        }
        Command::ExportScatter { checkpoint, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let model = ckpt.model()?;
            let (_, eval_data) = datasets(&ckpt.config).context("regenerating the eval split")?;
            for p in export_assignment_scatter(&model, eval_data.as_eval(), &out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

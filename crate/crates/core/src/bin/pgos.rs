use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use pgos_core::config::ExperimentConfig;
use pgos_core::pipeline::{
    run_pipeline, stage_data, stage_detector, stage_embed, stage_evaluate, stage_policy, stage_project,
    stage_synthesize, RunPaths,
};
use pgos_core::suite::{run_suite, suite_csv};
use pgos_core::synth::Sampler;
use pgos_core::{Error, Result};

/// Policy-guided pseudo-outlier synthesis for graph-level OOD detection.
#[derive(Parser)]
#[command(name = "pgos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Dotted-path patch such as `embedder.k=8`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the dataset and write the train/test splits.
    GenData(Common),
    /// Train the embedder and write cluster statistics.
    TrainEmbed(Common),
    /// Train the exploration policy (pgos sampler only).
    TrainPolicy(Common),
    /// Sample latents and decode pseudo-outlier graphs.
    Synthesize(Common),
    /// Train the outlier-regularized detector.
    TrainDetector(Common),
    /// Score the test splits and write metrics.
    Evaluate(Common),
    /// All stages in order.
    Run(Common),
    /// Seeds x samplers grid, optionally sweeping the prototype count.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "pgos,gaussian,none")]
        samplers: Vec<Sampler>,
        /// Prototype counts to sweep, e.g. `2,4,8,16`.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// 2-D PCA export of ID embeddings and sampled latents.
    Project(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Suite { common, seeds, samplers, ks } => {
            let cfg = load(common)?;
            let summary = run_suite(&cfg, seeds, samplers, ks.as_deref(), &common.out)?;
            let csv = suite_csv(&summary);
            let path = common.out.join(format!("suite-{}.csv", cfg.short_hash()));
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
            print!("{csv}");
            Ok(())
        }
        Command::GenData(c)
        | Command::TrainEmbed(c)
        | Command::TrainPolicy(c)
        | Command::Synthesize(c)
        | Command::TrainDetector(c)
        | Command::Evaluate(c)
        | Command::Run(c)
        | Command::Project(c) => {
            let cfg = load(c)?;
            let paths = RunPaths::new(&c.out, &cfg);
            match &cli.command {
                Command::GenData(_) => stage_data(&cfg, &paths).map(drop),
                Command::TrainEmbed(_) => stage_embed(&cfg, &paths).map(drop),
                Command::TrainPolicy(_) => stage_policy(&cfg, &paths).map(drop),
                Command::Synthesize(_) => stage_synthesize(&cfg, &paths).map(drop),
                Command::TrainDetector(_) => stage_detector(&cfg, &paths).map(drop),
                Command::Evaluate(_) => print_json(&stage_evaluate(&cfg, &paths)?),
                Command::Run(_) => print_json(&run_pipeline(&cfg, &c.out)?.0),
                Command::Project(_) => {
                    println!("{}", stage_project(&cfg, &paths)?.display());
                    Ok(())
                }
                Command::Suite { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

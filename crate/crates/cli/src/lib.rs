//! Command-line driver: the pipeline as separately runnable stages that
//! exchange files under the configured output directory.

pub mod config;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use jointcqa::par::Exec;

use stages::{Ctx, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "jointcqa",
    version,
    about = "Joint multitask ranking for community question answering"
)]
pub struct Cli {
    /// TOML configuration; relative paths inside it resolve against its directory.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set experiment.crf.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory; shorthand for `--set paths.output_dir=...`.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// No progress messages on stderr and no report on stdout.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to `<out>/synth/dataset.json`.
    Synth,
    /// Load and split the data, compute feature rows.
    Extract,
    /// Train the three task networks.
    TrainDnn,
    /// Compute task embeddings and network probabilities.
    Embed,
    /// Train one CRF per configured topology.
    TrainCrf {
        /// Train only this preset; shorthand for `--set experiment.topologies=[...]`.
        #[arg(long)]
        topology: Option<String>,
    },
    /// Marginals of the test groups under each trained CRF.
    Predict,
    /// Retrain target networks with upstream outputs as extra inputs.
    PipelineBaseline,
    /// Score every system on the test groups.
    Evaluate,
    /// Run every stage from extraction to evaluation.
    Train,
    /// Print the default configuration.
    Config,
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!(
            "paths.output_dir={}",
            toml::Value::String(out.display().to_string())
        ));
    }
    if let Command::TrainCrf { topology: Some(t) } = &cli.command {
        overrides.push(format!("experiment.topologies=[{}]", toml::Value::String(t.clone())));
    }
    if let Command::Config = cli.command {
        print!("{}", config::default_toml()?);
        return Ok(());
    }
    let loaded = if matches!(cli.command, Command::Synth) && cli.config.is_none() {
        let mut o = vec!["mode.source=\"synth\"".to_string()];
        o.extend(overrides);
        config::load(None, &o)
    } else {
        config::load(cli.config.as_deref(), &overrides)
    };
    let loaded = anyhow::Context::context(loaded, "stage config")?;
    let ctx = Ctx::new(loaded, exec(cli.sequential), cli.quiet);
    let plan = match cli.command {
        Command::Synth => vec![Stage::Synth],
        Command::Extract => vec![Stage::Extract],
        Command::TrainDnn => vec![Stage::TrainDnn],
        Command::Embed => vec![Stage::Embed],
        Command::TrainCrf { .. } => vec![Stage::TrainCrf],
        Command::Predict => vec![Stage::Predict],
        Command::PipelineBaseline => vec![Stage::PipelineBaseline],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Train => stages::full_run(&ctx),
        Command::Config => unreachable!(),
    };
    for stage in plan {
        if let Some(report) = stages::run_stage(&ctx, stage)? {
            if !cli.quiet {
                print!("{report}");
            }
        }
    }
    Ok(())
}

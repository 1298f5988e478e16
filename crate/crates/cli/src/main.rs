//! `opu <command> --config <path> [--force] [--out <dir>]`

mod commands;
mod config;
mod plot;
mod posterior;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::{load_config, LoadedConfig};
use crate::run::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Generate or ingest the train, distill, test and OOD splits.
    PrepareData,
    TrainTeacher,
    SamplePosterior,
    /// Push posterior samples through the distillation inputs.
    Pushforward,
    Distill,
    Eval,
    PlotSimplex,
    Report,
    /// Every stage above, in order.
    All,
}

const PIPELINE: [Command; 8] = [
    Command::PrepareData,
    Command::TrainTeacher,
    Command::SamplePosterior,
    Command::Pushforward,
    Command::Distill,
    Command::Eval,
    Command::PlotSimplex,
    Command::Report,
];

#[derive(Debug, Parser)]
#[command(name = "opu", version, about = "Distill sampled Bayesian classifiers into one-pass Dirichlet students")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Accept upstream artifacts and metrics written under a different config.
    #[arg(long)]
    force: bool,
    /// Run directory; defaults to `$OPU_RUN_ROOT/<config hash prefix>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(c: Command, cfg: &LoadedConfig, run: &Run) -> anyhow::Result<()> {
    match c {
        Command::PrepareData => commands::prepare_data(cfg, run),
        Command::TrainTeacher => commands::train_teacher(cfg, run),
        Command::SamplePosterior => commands::sample_posterior(cfg, run),
        Command::Pushforward => commands::pushforward_cmd(cfg, run),
        Command::Distill => commands::distill_cmd(cfg, run),
        Command::Eval => commands::eval(cfg, run),
        Command::PlotSimplex => commands::plot_simplex(cfg, run),
        Command::Report => commands::report(cfg, run),
        Command::All => PIPELINE.iter().try_for_each(|&c| dispatch(c, cfg, run)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.config).and_then(|cfg| {
        let run = Run::open(&cfg, cli.out.as_deref(), cli.force);
        std::fs::create_dir_all(&run.dir)?;
        let stamped = serde_json::json!({ "config_hash": cfg.hash, "config": cfg.config });
        std::fs::write(run.dir.join("config.json"), serde_json::to_string_pretty(&stamped)? + "\n")?;
        dispatch(cli.command, &cfg, &run)?;
        eprintln!("{}: done ({})", cli.command.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default(), run.dir.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

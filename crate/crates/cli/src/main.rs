use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fxres_cli::{Pipeline, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "fxres", version, about = "Capital-flow and exchange-rate volatility pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` from the config file and environment.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic input dataset under `<output_dir>/data`.
    Synth(Common),
    /// Weekly and quarterly volatility series.
    Volatility(Common),
    /// Country clustering on structural factors.
    Cluster(Common),
    /// Panel SVAR impulse responses.
    Spvar(Common),
    /// Panel FGLS regressions.
    Regress(Common),
    /// Threshold calculations from fitted regressions.
    Threshold(Common),
    /// Composite-factor resilience ranking.
    Resilience(Common),
    /// Supporting-factor counts and market-based resilience for one year.
    Casestudy(Common),
    /// Collect completed outputs into report.json.
    Report(Common),
    /// Run every analysis stage and the report.
    Run(Common),
}

fn config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = &c.output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, stage) = match &cli.command {
        Command::Synth(c) => (c, Some(Stage::Synth)),
        Command::Volatility(c) => (c, Some(Stage::Volatility)),
        Command::Cluster(c) => (c, Some(Stage::Cluster)),
        Command::Spvar(c) => (c, Some(Stage::Spvar)),
        Command::Regress(c) => (c, Some(Stage::Regress)),
        Command::Threshold(c) => (c, Some(Stage::Threshold)),
        Command::Resilience(c) => (c, Some(Stage::Resilience)),
        Command::Casestudy(c) => (c, Some(Stage::Casestudy)),
        Command::Report(c) => (c, Some(Stage::Report)),
        Command::Run(c) => (c, None),
    };
    let mut pipeline = Pipeline::open(config(common)?)?;
    let records = match stage {
        Some(s) => vec![pipeline.run(s)?],
        None => pipeline.run_all()?,
    };
    for r in records {
        println!("{}: {} output file(s)", r.name, r.outputs.len());
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

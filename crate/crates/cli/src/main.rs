use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use communitypoll_core::config::RunConfig;
use communitypoll_core::pipeline::{Pipeline, PipelineError, Stage, StageRun};

/// Poll a synthetic county population about a proposed data center.
#[derive(Parser)]
#[command(name = "communitypoll", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "communitypoll.toml")]
    config: PathBuf,
    /// Rerun stages even when their artifacts are current.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides `paths.cache_dir`.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fetch county marginals and profile from the census cache or API.
    Ingest,
    /// Fit and sample the synthetic population.
    Synthesize,
    /// Compute project impacts and render the regional context.
    Context,
    /// Survey every agent through the configured provider.
    Poll,
    /// Aggregate responses and run topic analysis.
    Analyze,
    /// Fit conformal thresholds from calibration pairs.
    Calibrate,
    /// Write the summary, aggregates and chart data.
    Report,
    /// Every stage in order.
    Run,
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(d) = &cli.cache_dir {
        cfg.paths.cache_dir = d.clone();
    }
    if let Some(d) = &cli.out {
        cfg.paths.out_dir = d.clone();
    }
    let mut pipeline = Pipeline::open(cfg, cli.force)?;
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Synthesize => Stage::Synthesize,
        Command::Context => Stage::Context,
        Command::Poll => Stage::Poll,
        Command::Analyze => Stage::Analyze,
        Command::Calibrate => Stage::Calibrate,
        Command::Report => Stage::Report,
        Command::Run => {
            for (stage, run) in pipeline.run_all()? {
                print_stage(stage, run);
            }
            println!("report: {}", pipeline.out_dir().join("report/summary.txt").display());
            return Ok(());
        }
    };
    print_stage(stage, pipeline.run_stage(stage)?);
    Ok(())
}

fn print_stage(stage: Stage, run: StageRun) {
    match run {
        StageRun::Ran => println!("{}: done", stage.name()),
        StageRun::UpToDate => println!("{}: up to date", stage.name()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

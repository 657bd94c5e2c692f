use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skatecv_cli::commands;
use skatecv_cli::fixture::{self, FixtureSpec};
use skatecv_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "skatecv",
    version,
    about = "ROI crops, TTA plans, logits fusion and evaluation for skating action recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the mock predictor seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Reject invalid detection records and classes without samples
    #[arg(long, global = true)]
    strict: bool,

    #[command(flatten)]
    tta: TtaArgs,
}

#[derive(Args)]
struct TtaArgs {
    /// Frames per clip
    #[arg(long, global = true)]
    clip_len: Option<u32>,
    /// Frame step inside a clip
    #[arg(long, global = true)]
    stride: Option<u32>,
    /// Number of temporal clips
    #[arg(long, global = true)]
    temporal_views: Option<u32>,
    /// Number of spatial crops (only 3 is supported)
    #[arg(long, global = true)]
    spatial_views: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Consolidate detections into one crop per video
    CropPlan,
    /// Expand crops into temporal x spatial test-time views
    TtaPlan,
    /// Synthesize logits for every planned view with the seeded mock predictor
    MockPredict,
    /// Fuse views, variants and models into per-video predictions
    Fuse,
    /// Score predictions with mean per-class accuracy
    Evaluate,
    /// Run every stage in order
    RunAll,
    /// Write a synthetic input set and config into a directory
    Fixture {
        /// Target directory
        dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        videos: usize,
        #[arg(long, default_value_t = 28)]
        classes: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::invalid("--config is required"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.mock.seed = seed;
    }
    cfg.strict |= cli.strict;
    let t = &cli.tta;
    cfg.tta.clip_len = t.clip_len.unwrap_or(cfg.tta.clip_len);
    cfg.tta.stride = t.stride.unwrap_or(cfg.tta.stride);
    cfg.tta.temporal_views = t.temporal_views.unwrap_or(cfg.tta.temporal_views);
    cfg.tta.spatial_views = t.spatial_views.unwrap_or(cfg.tta.spatial_views);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Fixture { dir, videos, classes } = &cli.command {
        let spec = FixtureSpec {
            videos: *videos,
            classes: *classes,
            seed: cli.seed.unwrap_or(FixtureSpec::default().seed),
        };
        let config = fixture::write_fixture(dir, &spec)?;
        println!("{}", config.display());
        return Ok(());
    }

    let cfg = load_config(cli)?;
    match cli.command {
        Command::CropPlan => {
            let s = commands::cmd_crop_plan(&cfg)?;
            println!("{}", s.output.display());
        }
        Command::TtaPlan => println!("{}", commands::cmd_tta_plan(&cfg)?.display()),
        Command::MockPredict => println!("{}", commands::cmd_mock_predict(&cfg)?.display()),
        Command::Fuse => println!("{}", commands::cmd_fuse(&cfg)?.display()),
        Command::Evaluate => print!("{}", commands::cmd_evaluate(&cfg)?.leaderboard.render_text()),
        Command::RunAll => print!("{}", commands::run_all(&cfg)?.leaderboard.render_text()),
        Command::Fixture { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

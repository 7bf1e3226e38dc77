//! `counterscene`: the pipeline as subcommands over files in a work directory.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data error, 4 failed `verify`.
//! Failures also print one JSON error record on stderr.

mod commands;

use clap::{Args, Parser, Subcommand};
use counterscene::config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "counterscene", version, about = "Counterfactual scene interventions against a simulated detector")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set campaign.trials=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Work directory; relative artifact paths resolve against it.
    #[arg(long, default_value = ".", global = true)]
    dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample scene graphs.
    Generate(commands::GenerateArgs),
    /// Derive ground-truth labels for a scene file.
    Label(commands::LabelArgs),
    /// Encode scenes as token sequences.
    Encode(commands::EncodeArgs),
    /// Train the reference masked density model.
    TrainDensity(commands::TrainDensityArgs),
    /// Run the single-step intervention campaign.
    Intervene(commands::InterveneArgs),
    /// Replay a campaign with uniformly random values.
    RandomBaseline(commands::RandomBaselineArgs),
    /// Run the two-step intervention campaign.
    TwoStep(commands::TwoStepArgs),
    /// Rank groups by how often edits flip the score.
    Aggregate(commands::AggregateArgs),
    /// Build a group dataset: scenes rewritten toward one group.
    Curate(commands::CurateArgs),
    /// Fit the detector oracle from an IID manifest plus added scene files.
    FitDetector(commands::FitDetectorArgs),
    /// Evaluate detectors on IID and group-restricted datasets.
    Eval(commands::EvalArgs),
    /// Collect low-scoring pool scenes below each threshold.
    CollectAgnostic(commands::CollectAgnosticArgs),
    /// Render tables, histograms and curves.
    Report(commands::ReportArgs),
    /// Check invariants of existing artifacts.
    Verify(commands::VerifyArgs),
}

/// A failed run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Verify(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Data(_) => "data",
            Failure::Verify(_) => "verify",
        }
    }
}

impl From<counterscene::Error> for Failure {
    fn from(e: counterscene::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

/// Shared state for one invocation.
pub struct Ctx {
    pub config: RunConfig,
    pub dir: PathBuf,
}

impl Ctx {
    /// `path` if given, otherwise `default`; relative paths resolve against
    /// the work directory.
    pub fn path(&self, path: &Option<PathBuf>, default: &str) -> PathBuf {
        self.resolve(path.as_deref().unwrap_or(Path::new(default)))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = RunConfig::load_with(cli.global.config.as_deref(), &cli.global.overrides)?;
    std::fs::create_dir_all(&cli.global.dir)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", cli.global.dir.display())))?;
    let ctx = Ctx {
        config,
        dir: cli.global.dir,
    };
    match cli.command {
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Label(a) => commands::label(&ctx, a),
        Command::Encode(a) => commands::encode(&ctx, a),
        Command::TrainDensity(a) => commands::train_density(&ctx, a),
        Command::Intervene(a) => commands::intervene(&ctx, a),
        Command::RandomBaseline(a) => commands::random_baseline(&ctx, a),
        Command::TwoStep(a) => commands::two_step(&ctx, a),
        Command::Aggregate(a) => commands::aggregate(&ctx, a),
        Command::Curate(a) => commands::curate(&ctx, a),
        Command::FitDetector(a) => commands::fit_detector(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::CollectAgnostic(a) => commands::collect_agnostic(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = serde_json::json!({
                "error": { "kind": f.kind(), "code": f.code(), "message": f.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(f.code())
        }
    }
}

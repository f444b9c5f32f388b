//! `hlsim`: deterministic simulator of decentralized training where a shared
//! model hops between nodes and a learned policy picks the next node.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (config, dataset,
//! checkpoint), 3 runtime failure (simulation internals, artifact writing or
//! schema validation).

mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use hl_core::sim::{
    build_env, run_baseline_random_in_env, run_centralized_in_env, run_compare, run_embedding,
    run_episode, run_standalone_in_env, train_policy_in_env, EpisodeLog, EpisodePolicy,
    PolicyCheckpoint,
};
use hl_core::state::embedding_csv;
use hl_core::Real;

use output::{Kind, OutputTracker};

/// CLI-level error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn data(message: String) -> Self {
        Self { code: 2, message }
    }

    pub fn runtime(message: String) -> Self {
        Self { code: 3, message }
    }
}

/// Core errors about inputs (files, config values, checkpoint compatibility)
/// are data errors; everything else is a runtime failure.
impl From<hl_core::Error> for CliError {
    fn from(e: hl_core::Error) -> Self {
        use hl_core::Error;
        let code = match &e {
            Error::DataFormat { .. }
            | Error::InsufficientData(_)
            | Error::InvalidConfig(_)
            | Error::CheckpointMismatch(_)
            | Error::NodeOutOfRange { .. }
            | Error::EmptyInput(_)
            | Error::Io { .. } => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hlsim",
    version,
    about = "Decentralized-training simulator with a learned node-selection policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML). Omitted keys, or the whole flag, fall back to the
    /// nominal defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Random,
    Standalone,
    Centralized,
}

#[derive(Subcommand)]
enum Command {
    /// Train the node-selection policy and write episode logs plus the
    /// policy checkpoint.
    Train(CommonArgs),
    /// Run one greedy episode with a trained policy.
    Apply {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run a reference baseline.
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        /// random: uniform node hops; standalone: starter node trains alone
        /// to the goal or a validation-loss plateau; centralized: all shards
        /// pooled.
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Train the policy and the random baseline over repeated experiments
    /// and summarize round/cost percentiles.
    Compare(CommonArgs),
    /// Export the 2-D weight-space embedding of per-node models.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        /// Node count, overriding the config value.
        #[arg(long)]
        nodes: Option<usize>,
        /// Local-training batch size, overriding the config value.
        #[arg(long)]
        batch: Option<usize>,
        /// Local-training epochs, overriding the config value.
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(common) => cmd_train(common),
        Command::Apply { common, checkpoint } => cmd_apply(common, &checkpoint),
        Command::Baseline { common, method } => cmd_baseline(common, method),
        Command::Compare(common) => cmd_compare(common),
        Command::Embed {
            common,
            nodes,
            batch,
            epochs,
        } => cmd_embed(common, nodes, batch, epochs),
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::runtime(format!("cannot encode JSON: {e}")))
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("cannot encode JSON: {e}")))
}

fn cmd_train(common: CommonArgs) -> Result<(), CliError> {
    let config = config::load(common.config.as_deref(), common.seed)?;
    prepare_out(&common.out)?;
    let mut tracker = OutputTracker::new();
    tracker.write_manifest("train", &config, &common.out)?;
    let env = build_env::<Real>(&config)?;
    let (logs, checkpoint) = train_policy_in_env(&env)?;
    tracker.write(common.out.join("distance.csv"), env.matrix.to_csv(), Kind::DistanceCsv)?;
    tracker.write(common.out.join("episodes.json"), to_json(&logs)?, Kind::EpisodeLogs)?;
    tracker.write(
        common.out.join("episodes.csv"),
        output::episodes_csv(&logs),
        Kind::EpisodesCsv,
    )?;
    tracker.write(common.out.join("rounds.csv"), output::rounds_csv(&logs), Kind::RoundsCsv)?;
    tracker.write(common.out.join("policy.json"), to_json(&checkpoint)?, Kind::Policy)?;
    tracker.validate_all()
}

fn cmd_apply(common: CommonArgs, checkpoint_path: &Path) -> Result<(), CliError> {
    let config = config::load(common.config.as_deref(), common.seed)?;
    let checkpoint = PolicyCheckpoint::load(checkpoint_path).map_err(|e| {
        CliError::data(format!(
            "cannot load checkpoint {}: {e}",
            checkpoint_path.display()
        ))
    })?;
    prepare_out(&common.out)?;
    let mut tracker = OutputTracker::new();
    tracker.write_manifest("apply", &config, &common.out)?;
    let env = build_env::<Real>(&config)?;
    let agent = checkpoint.into_agent::<Real>(&config)?;
    let log = run_episode(&env, EpisodePolicy::Greedy { agent: &agent }, 0)?;
    tracker.write(common.out.join("distance.csv"), env.matrix.to_csv(), Kind::DistanceCsv)?;
    tracker.write(common.out.join("episode.json"), to_json(&log)?, Kind::EpisodeLog)?;
    tracker.write(
        common.out.join("rounds.csv"),
        output::rounds_csv(std::slice::from_ref(&log)),
        Kind::RoundsCsv,
    )?;
    tracker.validate_all()
}

fn cmd_baseline(common: CommonArgs, method: Method) -> Result<(), CliError> {
    let config = config::load(common.config.as_deref(), common.seed)?;
    prepare_out(&common.out)?;
    let mut tracker = OutputTracker::new();
    let name = match method {
        Method::Random => "baseline-random",
        Method::Standalone => "baseline-standalone",
        Method::Centralized => "baseline-centralized",
    };
    tracker.write_manifest(name, &config, &common.out)?;
    let env = build_env::<Real>(&config)?;
    tracker.write(common.out.join("distance.csv"), env.matrix.to_csv(), Kind::DistanceCsv)?;
    match method {
        Method::Random => {
            let logs = run_baseline_random_in_env(&env, config.episodes)?;
            tracker.write(common.out.join("episodes.json"), to_json(&logs)?, Kind::EpisodeLogs)?;
            tracker.write(
                common.out.join("episodes.csv"),
                output::episodes_csv(&logs),
                Kind::EpisodesCsv,
            )?;
            tracker.write(
                common.out.join("rounds.csv"),
                output::rounds_csv(&logs),
                Kind::RoundsCsv,
            )?;
        }
        Method::Standalone | Method::Centralized => {
            let curve = match method {
                Method::Standalone => run_standalone_in_env(&env)?,
                _ => run_centralized_in_env(&env)?,
            };
            tracker.write(common.out.join("curve.json"), to_json_pretty(&curve)?, Kind::Curve)?;
            tracker.write(common.out.join("curve.csv"), output::curve_csv(&curve), Kind::CurveCsv)?;
        }
    }
    tracker.validate_all()
}

fn cmd_compare(common: CommonArgs) -> Result<(), CliError> {
    let config = config::load(common.config.as_deref(), common.seed)?;
    prepare_out(&common.out)?;
    let runs_dir = common.out.join("runs");
    prepare_out(&runs_dir)?;
    let mut tracker = OutputTracker::new();
    tracker.write_manifest("compare", &config, &common.out)?;
    let result = run_compare::<Real>(&config)?;
    tracker.write(
        common.out.join("summary.json"),
        to_json_pretty(&result.summary)?,
        Kind::Summary,
    )?;
    tracker.write(
        common.out.join("summary.csv"),
        output::summary_csv(&result.summary),
        Kind::SummaryCsv,
    )?;
    let write_runs = |tracker: &mut OutputTracker,
                      prefix: &str,
                      runs: &[Vec<EpisodeLog>]|
     -> Result<(), CliError> {
        for (k, run) in runs.iter().enumerate() {
            tracker.write(
                runs_dir.join(format!("{prefix}_{k:02}.json")),
                to_json(run)?,
                Kind::EpisodeLogs,
            )?;
        }
        Ok(())
    };
    write_runs(&mut tracker, "hl", &result.hl_runs)?;
    write_runs(&mut tracker, "random", &result.random_runs)?;
    tracker.validate_all()
}

fn cmd_embed(
    common: CommonArgs,
    nodes: Option<usize>,
    batch: Option<usize>,
    epochs: Option<usize>,
) -> Result<(), CliError> {
    let mut config = config::load(common.config.as_deref(), common.seed)?;
    if let Some(n) = nodes {
        config.nodes = n;
    }
    if let Some(b) = batch {
        config.foundation.batch_size = b;
    }
    if let Some(e) = epochs {
        config.foundation.epochs = e;
    }
    config
        .validate()
        .map_err(|e| CliError::data(format!("invalid config after overrides: {e}")))?;
    prepare_out(&common.out)?;
    let mut tracker = OutputTracker::new();
    tracker.write_manifest("embed", &config, &common.out)?;
    let result = run_embedding::<Real>(&config)?;
    println!("embedded {} nodes at {} samples each", config.nodes, result.samples_per_node);
    tracker.write(
        common.out.join("embedding.csv"),
        embedding_csv(&result.rows),
        Kind::EmbeddingCsv { rows: config.nodes },
    )?;
    tracker.validate_all()
}

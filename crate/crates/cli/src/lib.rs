//! `indoor-nav-rl`: train, evaluate, plot and trace from the command line.
//!
//! Every command is a library function taking parsed arguments and a writer
//! for human-readable output, so tests can drive them in process.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use inavrl::env::write_trace_csv;
use inavrl::io::checkpoint::{read_checkpoint, CheckpointError};
use inavrl::io::{parse_metrics_csv, parse_trace_svg, render_goal_rate_chart, render_trace_svg};
use inavrl::{
    architecture_hash, run_curriculum, EvalReport, RewardModelParams, Rollout, RunArtifacts, RunOptions, Trainer,
};

use crate::config::{load_world, resolve, ConfigSources, Profile, RunConfig};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "INAVRL_WORKERS";
pub const CONFIG_SNAPSHOT: &str = "config.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(anyhow::Error),
}

impl std::error::Error for CliError {}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl CliError {
    /// 0 success, 1 runtime failure, 2 usage or configuration error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "indoor-nav-rl",
    version,
    about = "Curriculum PPO for lidar-based indoor navigation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the curriculum and write a run directory.
    Train(TrainArgs),
    /// Roll out a checkpoint and report goal, collision and timeout rates.
    Eval(EvalArgs),
    /// Render the goal-rate moving average of a metrics CSV as SVG.
    Plot(PlotArgs),
    /// Record one episode as a trajectory CSV and an overhead SVG.
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration, overlaid on the profile's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base defaults.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Override one setting, e.g. `train.learning_rate=1e-4` or
    /// `phases.0.iterations=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub reward_model: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self, output_dir: Option<&Path>) -> Result<RunConfig, CliError> {
        resolve(&ConfigSources {
            profile: self.profile,
            config_file: self.config.as_deref(),
            sets: &self.sets,
            reward_model: self.reward_model,
            seed: self.seed,
            output_dir,
            workers: std::env::var(WORKERS_ENV).ok(),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Continue from a checkpoint written by an identically configured run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Iterations between periodic checkpoints.
    #[arg(long, default_value_t = inavrl::curriculum::DEFAULT_CHECKPOINT_EVERY)]
    pub checkpoint_every: u64,
}

impl Default for TrainArgs {
    fn default() -> Self {
        Self {
            config: ConfigArgs::default(),
            output_dir: None,
            resume: None,
            checkpoint_every: inavrl::curriculum::DEFAULT_CHECKPOINT_EVERY,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `empty`, `obstacles` or a world JSON file.
    #[arg(long)]
    pub world: String,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Take the argmax action instead of sampling.
    #[arg(long)]
    pub deterministic: bool,
    /// Evaluation seed; defaults to the configured seed.
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "eval_report.json")]
    pub report: PathBuf,
    /// Configuration of the run that produced the checkpoint. Defaults to
    /// the `config.json` snapshot of that run directory when present.
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub world: String,
    /// Episode seed.
    #[arg(long = "trace-seed", default_value_t = 0)]
    pub trace_seed: u64,
    /// Output stem: writes `<stem>.csv` and `<stem>.svg`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a, out).map(|_| ()),
        Command::Plot(a) => cmd_plot(&a, out),
        Command::Trace(a) => cmd_trace(&a, out).map(|_| ()),
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<RunArtifacts, CliError> {
    if args.checkpoint_every == 0 {
        return Err(CliError::Usage("--checkpoint-every must be positive".into()));
    }
    let config = args.config.resolve(args.output_dir.as_deref())?;
    let plan = config.plan()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, config.to_json()).map_err(|e| CliError::Config(format!("{}: {e}", snapshot.display())))?;

    let mut trainer = Trainer::new(
        config.train.clone(),
        config.env.clone(),
        RewardModelParams::new(config.reward_model),
        plan.phases()[0].world.clone(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let options = RunOptions {
        output_dir: dir.clone(),
        checkpoint_every: args.checkpoint_every,
        resume_from: args.resume.clone(),
    };
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut progress = |m: &inavrl::IterationMetrics| {
        // Progress is best effort; a closed stdout must not abort training.
        let _ = writeln!(
            out,
            "iter {:>4}  phase {}  goal_rate {}  ma5 {}  mean_kl {:.3e}",
            m.iteration,
            m.phase,
            fmt(m.goal_rate),
            fmt(m.goal_rate_ma5),
            m.mean_kl
        );
    };
    let artifacts = run_curriculum(&plan, &mut trainer, &options, &mut progress).map_err(|e| match e {
        inavrl::curriculum::CurriculumError::Checkpoint(CheckpointError::HashMismatch { .. }) => {
            CliError::Config(e.to_string())
        }
        other => runtime(other),
    })?;
    let _ = writeln!(out, "run complete: {}", dir.display());
    Ok(artifacts)
}

/// Resolves the configuration that goes with a checkpoint: explicit flags
/// win, otherwise the run directory's snapshot is used when it exists.
fn checkpoint_config(args: &ConfigArgs, checkpoint: &Path) -> Result<RunConfig, CliError> {
    let mut args = args.clone();
    if args.config.is_none() && args.profile.is_none() {
        let snapshot = checkpoint
            .parent()
            .and_then(Path::parent)
            .map(|run| run.join(CONFIG_SNAPSHOT))
            .filter(|p| p.exists());
        args.config = snapshot;
    }
    args.resolve(None)
}

fn load_policy(args: &ConfigArgs, checkpoint: &Path) -> Result<(RunConfig, inavrl::ppo::PolicyParams<f32>), CliError> {
    let config = checkpoint_config(args, checkpoint)?;
    let expected = architecture_hash(config.env.observation_len(), &config.train.hidden_layers);
    match read_checkpoint(checkpoint, Some(expected)) {
        Ok(ck) => Ok((config, ck.state.params)),
        Err(e @ CheckpointError::HashMismatch { .. }) => Err(CliError::Config(format!("refusing checkpoint: {e}"))),
        Err(e) => Err(runtime(e)),
    }
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    if args.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let world = Arc::new(load_world(&args.world)?);
    let (config, params) = load_policy(&args.config, &args.checkpoint)?;
    let rollout = Rollout {
        params: &params,
        world,
        env: &config.env,
        reward: RewardModelParams::new(config.reward_model),
        deterministic: args.deterministic,
    };
    let report = rollout
        .evaluate(args.episodes, args.eval_seed.unwrap_or(config.seed))
        .map_err(runtime)?;
    let steps = report
        .mean_steps_to_goal
        .map_or_else(|| "n/a".to_string(), |s| format!("{s:.1}"));
    let _ = writeln!(
        out,
        "world {}  episodes {}  goal_rate {:.3}  mean_steps_to_goal {}  collision_rate {:.3}",
        report.world, report.episodes, report.goal_rate, steps, report.collision_rate
    );
    let mut json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    json.push('\n');
    fs::write(&args.report, json).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", args.report.display())))?;
    Ok(report)
}

pub fn cmd_plot(args: &PlotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text =
        fs::read_to_string(&args.metrics).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", args.metrics.display())))?;
    let rows = parse_metrics_csv(&text).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", args.metrics.display())))?;
    let svg = render_goal_rate_chart(&rows).map_err(runtime)?;
    fs::write(&args.output, svg).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", args.output.display())))?;
    let _ = writeln!(out, "wrote {} ({} iterations)", args.output.display(), rows.len());
    Ok(())
}

/// Paths written by `trace`.
#[derive(Clone, Debug)]
pub struct TraceOutput {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub trace: inavrl::Trace,
}

pub fn cmd_trace(args: &TraceArgs, out: &mut dyn Write) -> Result<TraceOutput, CliError> {
    let world = Arc::new(load_world(&args.world)?);
    let (config, params) = load_policy(&args.config, &args.checkpoint)?;
    let rollout = Rollout {
        params: &params,
        world: world.clone(),
        env: &config.env,
        reward: RewardModelParams::new(config.reward_model),
        deterministic: args.deterministic,
    };
    let trace = rollout.episode(args.trace_seed, 0).map_err(runtime)?;
    let csv = args.output.with_extension("csv");
    let svg = args.output.with_extension("svg");
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(&csv, write_trace_csv(&trace.rows)).map_err(runtime)?;
    let image = render_trace_svg(&world, &trace, config.env.goal_radius);
    // The chart must stay readable by its own parser.
    parse_trace_svg(&image).map_err(|e| runtime(anyhow::anyhow!("trace SVG: {e}")))?;
    fs::write(&svg, image).map_err(runtime)?;
    let _ = writeln!(
        out,
        "outcome {}  steps {}  wrote {} and {}",
        trace.outcome,
        trace.rows.len() - 1,
        csv.display(),
        svg.display()
    );
    Ok(TraceOutput { csv, svg, trace })
}

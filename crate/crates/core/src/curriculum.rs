//! Two-phase curriculum driver: train in the obstacle-free room, then keep
//! training the same policy, critic and optimizer in the obstacle room.
//! Records one metrics row per iteration and checkpoints as it goes.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldSpec;
use crate::io::checkpoint::{read_checkpoint, write_checkpoint, write_sidecar, Checkpoint, CheckpointError};
use crate::io::metrics::{format_metrics_row, parse_metrics_csv, MetricsError, METRICS_HEADER};
use crate::ppo::{architecture_hash, EpisodeEnd, EpisodeSummary, IterationResult, TrainError, Trainer};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const INCOMPLETE_MARKER: &str = "RUN_INCOMPLETE";
pub const COMPLETE_MARKER: &str = "RUN_COMPLETE";
pub const DEFAULT_CHECKPOINT_EVERY: u64 = 10;
/// Goal-rate entries carried in checkpoints; enough to rebuild the window.
const HISTORY_KEEP: usize = 5;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("invalid curriculum plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CurriculumError + '_ {
    move |source| CurriculumError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct Phase {
    pub world: Arc<WorldSpec>,
    pub iterations: u64,
}

/// Ordered training phases; the iteration counter runs across all of them.
#[derive(Clone, Debug)]
pub struct CurriculumPlan {
    phases: Vec<Phase>,
}

impl CurriculumPlan {
    pub fn new(phases: Vec<Phase>) -> Result<Self, CurriculumError> {
        if phases.is_empty() {
            return Err(CurriculumError::Plan("at least one phase is required".into()));
        }
        if let Some(i) = phases.iter().position(|p| p.iterations == 0) {
            return Err(CurriculumError::Plan(format!("phase {} has zero iterations", i + 1)));
        }
        Ok(Self { phases })
    }

    /// 200 iterations in the empty room, then 100 with obstacles.
    pub fn full_scale() -> Self {
        Self::two_phase(200, 100)
    }

    /// 80 + 40 iterations, sized for a desktop CPU.
    pub fn desk() -> Self {
        Self::two_phase(80, 40)
    }

    pub fn two_phase(first: u64, second: u64) -> Self {
        Self::new(vec![
            Phase {
                world: Arc::new(WorldSpec::empty_room()),
                iterations: first,
            },
            Phase {
                world: Arc::new(WorldSpec::obstacle_room()),
                iterations: second,
            },
        ])
        .expect("positive counts")
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn total_iterations(&self) -> u64 {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    /// Zero-based phase that trains the iteration following `completed`
    /// finished iterations, or `None` once the plan is done.
    pub fn phase_of(&self, completed: u64) -> Option<usize> {
        let mut end = 0;
        for (i, p) in self.phases.iter().enumerate() {
            end += p.iterations;
            if completed < end {
                return Some(i);
            }
        }
        None
    }

    /// Global iteration number (one-based) of each phase's last iteration.
    pub fn phase_ends(&self) -> Vec<u64> {
        self.phases
            .iter()
            .scan(0, |end, p| {
                *end += p.iterations;
                Some(*end)
            })
            .collect()
    }
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    /// Global, one-based.
    pub iteration: u64,
    /// One-based.
    pub phase: u32,
    pub episodes: usize,
    pub goals: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub truncated: usize,
    pub goal_rate: Option<f64>,
    pub goal_rate_ma5: Option<f64>,
    /// Mean over completed (non-truncated) episodes.
    pub mean_return: Option<f64>,
    #[serde(rename = "mean_ep_len")]
    pub mean_episode_length: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_kl: f64,
    pub entropy: f64,
    pub kl_coeff: f64,
}

/// Goals over completed episodes; truncated episodes have no outcome and are
/// left out. `None` when nothing completed.
pub fn goal_rate(episodes: &[EpisodeSummary]) -> Option<f64> {
    let completed = episodes.iter().filter(|e| e.end != EpisodeEnd::Truncated).count();
    let goals = episodes.iter().filter(|e| e.end == EpisodeEnd::Goal).count();
    (completed > 0).then(|| goals as f64 / completed as f64)
}

/// Mean of the last `min(5, len)` values; `None` for an empty series.
pub fn moving_average_5(history: &[f64]) -> Option<f64> {
    let window = &history[history.len().saturating_sub(5)..];
    (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64)
}

/// Moving average over the last five iterations, skipping iterations whose
/// goal rate is missing.
pub fn windowed_ma5(history: &[Option<f64>]) -> Option<f64> {
    let window: Vec<f64> = history[history.len().saturating_sub(5)..]
        .iter()
        .flatten()
        .copied()
        .collect();
    moving_average_5(&window)
}

/// Builds a metrics row. `history` must already include this iteration's
/// goal rate.
pub fn iteration_metrics(result: &IterationResult, phase: u32, history: &[Option<f64>]) -> IterationMetrics {
    let count = |end: EpisodeEnd| result.episodes.iter().filter(|e| e.end == end).count();
    let completed: Vec<&EpisodeSummary> = result
        .episodes
        .iter()
        .filter(|e| e.end != EpisodeEnd::Truncated)
        .collect();
    let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
        (!completed.is_empty()).then(|| completed.iter().map(|e| f(e)).sum::<f64>() / completed.len() as f64)
    };
    IterationMetrics {
        iteration: result.iteration,
        phase,
        episodes: result.episodes.len(),
        goals: count(EpisodeEnd::Goal),
        collisions: count(EpisodeEnd::Collision),
        timeouts: count(EpisodeEnd::Timeout),
        truncated: count(EpisodeEnd::Truncated),
        goal_rate: goal_rate(&result.episodes),
        goal_rate_ma5: windowed_ma5(history),
        mean_return: mean(&|e| e.total_return),
        mean_episode_length: mean(&|e| e.length as f64),
        policy_loss: result.update.policy_loss,
        value_loss: result.update.value_loss,
        mean_kl: result.update.mean_kl,
        entropy: result.update.entropy,
        kl_coeff: result.update.kl_coeff_after,
    }
}

/// Moves the trainer to the next phase's world. Parameters, optimizer
/// moments, `kl_coeff` and the iteration counter are carried over untouched.
pub fn phase_transition(trainer: &mut Trainer, next_world: Arc<WorldSpec>) {
    trainer.set_world(next_world);
    trainer.state.phase += 1;
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub checkpoint_every: u64,
    /// Checkpoint to continue from. Metrics rows after its iteration are
    /// dropped from an existing CSV before training resumes.
    pub resume_from: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            resume_from: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub metrics_path: PathBuf,
    /// Periodic and phase-boundary checkpoints written by this invocation.
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    /// Every metrics row of the run, including rows kept from before a resume.
    pub rows: Vec<IterationMetrics>,
    /// Maximum `goal_rate_ma5` per phase.
    pub phase_max_ma5: Vec<Option<f64>>,
}

pub fn checkpoint_path(output_dir: &Path, iteration: u64) -> PathBuf {
    output_dir
        .join(CHECKPOINT_DIR)
        .join(format!("iter_{iteration:06}.ckpt"))
}

/// Maximum of the moving average over each phase's rows.
pub fn phase_maxima(rows: &[IterationMetrics], phases: usize) -> Vec<Option<f64>> {
    let mut maxima = vec![None; phases];
    for row in rows {
        let (Some(slot), Some(v)) = (maxima.get_mut(row.phase as usize - 1), row.goal_rate_ma5) else {
            continue;
        };
        *slot = Some(slot.map_or(v, |m: f64| m.max(v)));
    }
    maxima
}

fn save(trainer: &Trainer, history: &[Option<f64>], path: &Path) -> Result<(), CurriculumError> {
    let ck = Checkpoint {
        config_hash: architecture_hash(trainer.env_config().observation_len(), &trainer.config().hidden_layers),
        state: trainer.state.clone(),
        goal_rate_history: history[history.len().saturating_sub(HISTORY_KEEP)..].to_vec(),
    };
    write_checkpoint(path, &ck)?;
    write_sidecar(&path.with_extension("json"), &ck)?;
    Ok(())
}

/// Runs the plan to completion, appending to `metrics.csv` after every
/// iteration. On error the partial artifacts stay on disk next to a
/// `RUN_INCOMPLETE` marker.
pub fn run_curriculum(
    plan: &CurriculumPlan,
    trainer: &mut Trainer,
    options: &RunOptions,
    progress: &mut dyn FnMut(&IterationMetrics),
) -> Result<RunArtifacts, CurriculumError> {
    let dir = &options.output_dir;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_dir).map_err(io_error(&ckpt_dir))?;
    let complete = dir.join(COMPLETE_MARKER);
    if complete.exists() {
        fs::remove_file(&complete).map_err(io_error(&complete))?;
    }
    let incomplete = dir.join(INCOMPLETE_MARKER);
    fs::write(&incomplete, "run in progress or interrupted\n").map_err(io_error(&incomplete))?;

    let metrics_path = dir.join(METRICS_FILE);
    let mut rows = Vec::new();
    let mut history = Vec::new();
    if let Some(resume) = &options.resume_from {
        let hash = architecture_hash(trainer.env_config().observation_len(), &trainer.config().hidden_layers);
        let ck = read_checkpoint(resume, Some(hash))?;
        if ck.state.params.input_len() != trainer.env_config().observation_len() {
            return Err(CurriculumError::Plan(
                "checkpoint input size differs from the environment".into(),
            ));
        }
        if metrics_path.exists() {
            let text = fs::read_to_string(&metrics_path).map_err(io_error(&metrics_path))?;
            rows = parse_metrics_csv(&text)?;
            rows.retain(|r| r.iteration <= ck.state.iteration);
        }
        history = ck.goal_rate_history;
        trainer.state = ck.state;
    }
    if trainer.state.phase as usize >= plan.phases().len() {
        return Err(CurriculumError::Plan(format!(
            "checkpoint phase {} is beyond the plan",
            trainer.state.phase + 1
        )));
    }
    trainer.set_world(plan.phases()[trainer.state.phase as usize].world.clone());

    let mut file = File::create(&metrics_path).map_err(io_error(&metrics_path))?;
    let mut prefix = format!("{METRICS_HEADER}\n");
    for row in &rows {
        prefix.push_str(&format_metrics_row(row));
    }
    file.write_all(prefix.as_bytes()).map_err(io_error(&metrics_path))?;
    drop(file);
    let mut file = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(io_error(&metrics_path))?;

    let phase_ends = plan.phase_ends();
    let mut checkpoints = Vec::new();
    while let Some(phase) = plan.phase_of(trainer.state.iteration) {
        while (trainer.state.phase as usize) < phase {
            let next = plan.phases()[trainer.state.phase as usize + 1].world.clone();
            phase_transition(trainer, next);
        }
        let result = trainer.train_iteration()?;
        history.push(goal_rate(&result.episodes));
        let row = iteration_metrics(&result, trainer.state.phase + 1, &history);
        file.write_all(format_metrics_row(&row).as_bytes())
            .and_then(|_| file.flush())
            .map_err(io_error(&metrics_path))?;
        progress(&row);
        rows.push(row);
        let it = result.iteration;
        if it % options.checkpoint_every.max(1) == 0 || phase_ends.contains(&it) {
            let path = checkpoint_path(dir, it);
            save(trainer, &history, &path)?;
            checkpoints.push(path);
        }
    }
    let final_checkpoint = ckpt_dir.join(FINAL_CHECKPOINT);
    save(trainer, &history, &final_checkpoint)?;

    fs::remove_file(&incomplete).map_err(io_error(&incomplete))?;
    fs::write(&complete, format!("iterations {}\n", trainer.state.iteration)).map_err(io_error(&complete))?;
    let phase_max_ma5 = phase_maxima(&rows, plan.phases().len());
    Ok(RunArtifacts {
        output_dir: dir.clone(),
        metrics_path,
        checkpoints,
        final_checkpoint,
        rows,
        phase_max_ma5,
    })
}

//! Indoor navigation reinforcement learning: a planar lidar simulator, the
//! two shaped reward models, a from-scratch PPO trainer and a two-phase
//! curriculum driver with goal-rate reporting.

pub mod curriculum;
pub mod env;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod ppo;
pub mod reward;

pub use curriculum::{
    goal_rate, moving_average_5, phase_transition, run_curriculum, CurriculumPlan, IterationMetrics, Phase,
    RunArtifacts, RunOptions,
};
pub use env::{
    action_decode, heading_error, ActionCommand, EnvConfig, EnvError, EnvState, NavEnv, Observation, Pose, StepOutcome,
    Transition, ACTION_COUNT,
};
pub use eval::{EvalReport, Rollout, Trace};
pub use geometry::{Rect, Vec2, WorldError, WorldSpec};
pub use ppo::{architecture_hash, TrainConfig, Trainer, TrainerState};
pub use reward::{RewardBreakdown, RewardModel, RewardModelParams};

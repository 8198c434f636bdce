//! Offline evaluation of a trained policy and single-episode traces.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvError, NavEnv, Pose, StepOutcome, TraceRow};
use crate::geometry::{Vec2, WorldSpec};
use crate::ppo::{derive_seed, featurize, policy_forward, sample_action, PolicyParams, SeedStream};
use crate::reward::RewardModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub world: String,
    pub episodes: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub goals: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean episode length over successful episodes only.
    pub mean_steps_to_goal: Option<f64>,
    pub mean_return: f64,
}

/// One recorded episode: row 0 is the start pose, then one row per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub start: Pose,
    pub goal: Vec2,
    pub rows: Vec<TraceRow>,
    pub outcome: StepOutcome,
}

/// Everything needed to roll out a fixed policy.
#[derive(Clone, Debug)]
pub struct Rollout<'a> {
    pub params: &'a PolicyParams<f32>,
    pub world: Arc<WorldSpec>,
    pub env: &'a EnvConfig,
    pub reward: RewardModelParams,
    /// Take the argmax action instead of sampling.
    pub deterministic: bool,
}

impl Rollout<'_> {
    /// Plays one episode with the RNG stream for `(seed, episode)`.
    pub fn episode(&self, seed: u64, episode: u64) -> Result<Trace, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SeedStream::Eval as u64, episode]));
        let mut env = NavEnv::new(self.world.clone(), self.env.clone(), self.reward);
        let mut obs = env.reset(&mut rng)?;
        let state = env.state().expect("reset").clone();
        let mut rows = vec![TraceRow {
            step: 0,
            x: state.pose.position.x,
            y: state.pose.position.y,
            theta: state.pose.theta,
            action_index: None,
            reward_total: None,
            outcome: StepOutcome::Running,
        }];
        loop {
            let (logits, _) = policy_forward(self.params, &featurize(&obs, self.env));
            let (action, _) = sample_action(&logits, self.deterministic, &mut rng);
            let t = env.step(action)?;
            let s = env.state().expect("running episode");
            rows.push(TraceRow {
                step: s.step_count,
                x: s.pose.position.x,
                y: s.pose.position.y,
                theta: s.pose.theta,
                action_index: Some(action),
                reward_total: Some(t.reward.total),
                outcome: t.outcome,
            });
            if t.outcome.is_terminal() {
                return Ok(Trace {
                    start: state.pose,
                    goal: state.goal,
                    rows,
                    outcome: t.outcome,
                });
            }
            obs = t.observation;
        }
    }

    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<EvalReport, EnvError> {
        let (mut goals, mut collisions, mut timeouts) = (0, 0, 0);
        let (mut goal_steps, mut total_return) = (0usize, 0.0);
        for ep in 0..episodes {
            let trace = self.episode(seed, ep as u64)?;
            total_return += trace.rows.iter().filter_map(|r| r.reward_total).sum::<f64>();
            match trace.outcome {
                StepOutcome::Goal => {
                    goals += 1;
                    goal_steps += trace.rows.len() - 1;
                }
                StepOutcome::Collision => collisions += 1,
                StepOutcome::Timeout => timeouts += 1,
                StepOutcome::Running => unreachable!("episodes end terminal"),
            }
        }
        let n = episodes.max(1) as f64;
        Ok(EvalReport {
            world: self.world.name().to_string(),
            episodes,
            deterministic: self.deterministic,
            seed,
            goals,
            collisions,
            timeouts,
            goal_rate: goals as f64 / n,
            collision_rate: collisions as f64 / n,
            timeout_rate: timeouts as f64 / n,
            mean_steps_to_goal: (goals > 0).then(|| goal_steps as f64 / goals as f64),
            mean_return: total_return / n,
        })
    }
}

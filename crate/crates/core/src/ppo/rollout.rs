//! Experience collection. An iteration's batch is split evenly across
//! workers; each worker owns its environment and RNG stream, and every
//! episode still running when a worker fills its share is truncated with a
//! critic bootstrap value.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{featurize, policy_forward, sample_action, PolicyParams};
use super::{derive_seed, SeedStream};
use crate::env::{EnvConfig, EnvError, NavEnv, StepOutcome, ACTION_COUNT};
use crate::geometry::WorldSpec;
use crate::reward::RewardModelParams;

/// How an episode segment inside a batch ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeEnd {
    Goal,
    Collision,
    Timeout,
    /// Cut off at the batch boundary; carries no outcome.
    Truncated,
}

impl EpisodeEnd {
    /// Whether the value after the last step is zero rather than bootstrapped.
    pub fn is_true_terminal(self) -> bool {
        matches!(self, EpisodeEnd::Goal | EpisodeEnd::Collision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub end: EpisodeEnd,
    pub length: usize,
    pub total_return: f64,
}

/// Per-step arrays in collection order; every episode segment is contiguous.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub feature_len: usize,
    /// Row-major `[len, feature_len]`.
    pub features: Vec<f32>,
    pub actions: Vec<usize>,
    /// Behavior log-probability of the taken action.
    pub log_probs: Vec<f64>,
    /// Behavior logits, row-major `[len, ACTION_COUNT]`.
    pub logits: Vec<f32>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Marks the last step of an episode segment.
    pub segment_end: Vec<bool>,
    /// Value following a segment end: zero at goal/collision, the critic's
    /// estimate at timeouts and truncations. Zero on all other steps.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBatch {
    pub fn new(feature_len: usize) -> Self {
        Self {
            feature_len,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn features_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_len..(i + 1) * self.feature_len]
    }

    pub fn logits_row(&self, i: usize) -> &[f32] {
        &self.logits[i * ACTION_COUNT..(i + 1) * ACTION_COUNT]
    }

    pub fn append(&mut self, mut other: RolloutBatch) {
        assert_eq!(self.feature_len, other.feature_len);
        self.features.append(&mut other.features);
        self.actions.append(&mut other.actions);
        self.log_probs.append(&mut other.log_probs);
        self.logits.append(&mut other.logits);
        self.rewards.append(&mut other.rewards);
        self.values.append(&mut other.values);
        self.segment_end.append(&mut other.segment_end);
        self.bootstrap.append(&mut other.bootstrap);
        self.episodes.append(&mut other.episodes);
    }
}

/// Everything a worker needs besides the policy snapshot.
#[derive(Clone, Debug)]
pub struct CollectSpec<'a> {
    pub world: &'a Arc<WorldSpec>,
    pub env: &'a EnvConfig,
    pub reward: &'a RewardModelParams,
    pub batch_size: usize,
    pub num_workers: usize,
    pub seed: u64,
    pub iteration: u64,
}

/// Collects exactly `batch_size` steps. Deterministic for a fixed
/// `(seed, iteration, num_workers)`.
pub fn collect_batch(params: &PolicyParams<f32>, spec: &CollectSpec<'_>) -> Result<RolloutBatch, EnvError> {
    let workers = spec.num_workers.max(1);
    let shares: Vec<usize> = (0..workers)
        .map(|w| spec.batch_size / workers + usize::from(w < spec.batch_size % workers))
        .collect();
    let seed_for = |w: usize| derive_seed(spec.seed, &[SeedStream::Rollout as u64, spec.iteration, w as u64]);
    let parts: Vec<Result<RolloutBatch, EnvError>> = if workers == 1 {
        vec![collect_worker(params, spec, shares[0], seed_for(0))]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = shares
                .iter()
                .enumerate()
                .map(|(w, &share)| {
                    let seed = seed_for(w);
                    scope.spawn(move || collect_worker(params, spec, share, seed))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };
    let mut batch = RolloutBatch::new(spec.env.observation_len());
    for part in parts {
        batch.append(part?);
    }
    Ok(batch)
}

fn collect_worker(
    params: &PolicyParams<f32>,
    spec: &CollectSpec<'_>,
    steps: usize,
    seed: u64,
) -> Result<RolloutBatch, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = NavEnv::new(spec.world.clone(), spec.env.clone(), *spec.reward);
    let mut batch = RolloutBatch::new(spec.env.observation_len());
    if steps == 0 {
        return Ok(batch);
    }
    let mut features = featurize(&env.reset(&mut rng)?, spec.env);
    let (mut ep_len, mut ep_return) = (0usize, 0.0f64);
    for t in 0..steps {
        let (logits, value) = policy_forward(params, &features);
        let (action, log_prob) = sample_action(&logits, false, &mut rng);
        let transition = env.step(action)?;
        let next_features = featurize(&transition.observation, spec.env);

        batch.features.extend_from_slice(&features);
        batch.actions.push(action);
        batch.log_probs.push(log_prob);
        batch.logits.extend_from_slice(&logits);
        batch.rewards.push(transition.reward.total);
        batch.values.push(f64::from(value));
        ep_len += 1;
        ep_return += transition.reward.total;

        let end = match transition.outcome {
            StepOutcome::Goal => Some(EpisodeEnd::Goal),
            StepOutcome::Collision => Some(EpisodeEnd::Collision),
            StepOutcome::Timeout => Some(EpisodeEnd::Timeout),
            StepOutcome::Running if t + 1 == steps => Some(EpisodeEnd::Truncated),
            StepOutcome::Running => None,
        };
        match end {
            Some(end) => {
                let bootstrap = if end.is_true_terminal() {
                    0.0
                } else {
                    f64::from(policy_forward(params, &next_features).1)
                };
                batch.segment_end.push(true);
                batch.bootstrap.push(bootstrap);
                batch.episodes.push(EpisodeSummary {
                    end,
                    length: ep_len,
                    total_return: ep_return,
                });
                ep_len = 0;
                ep_return = 0.0;
                if t + 1 < steps {
                    features = featurize(&env.reset(&mut rng)?, spec.env);
                }
            }
            None => {
                batch.segment_end.push(false);
                batch.bootstrap.push(0.0);
                features = next_features;
            }
        }
    }
    Ok(batch)
}

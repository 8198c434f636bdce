use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::gae::compute_gae;
use super::nn::Adam;
use super::policy::PolicyParams;
use super::rollout::{collect_batch, CollectSpec, EpisodeSummary};
use super::update::{ppo_update, UpdateStats};
use super::{derive_seed, SeedStream, TrainError};
use crate::env::EnvConfig;
use crate::geometry::WorldSpec;
use crate::reward::RewardModelParams;

/// Everything that is learned or adapted during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub params: PolicyParams<f32>,
    pub optimizer: Adam<f32>,
    pub kl_coeff: f64,
    /// Completed iterations, counted across all curriculum phases.
    pub iteration: u64,
    /// Zero-based index of the curriculum phase being trained.
    pub phase: u32,
}

impl TrainerState {
    pub fn new(config: &TrainConfig, input_len: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[SeedStream::Init as u64]));
        let params = PolicyParams::init(input_len, &config.hidden_layers, &mut rng);
        let optimizer = Adam::new(params.param_count());
        Self {
            params,
            optimizer,
            kl_coeff: config.kl_coeff_initial,
            iteration: 0,
            phase: 0,
        }
    }

    /// SHA-256 over parameters, optimizer moments and step, and `kl_coeff`.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for slice in self.params.param_slices() {
            for v in slice {
                hasher.update(v.to_le_bytes());
            }
        }
        for v in self.optimizer.m.iter().chain(&self.optimizer.v) {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(self.optimizer.step.to_le_bytes());
        hasher.update(self.kl_coeff.to_le_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Outcome of one collect / advantage / update cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    /// One-based global iteration number just completed.
    pub iteration: u64,
    pub episodes: Vec<EpisodeSummary>,
    pub steps: usize,
    pub update: UpdateStats,
}

/// PPO trainer bound to one world at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    env: EnvConfig,
    reward: RewardModelParams,
    world: Arc<WorldSpec>,
    pub state: TrainerState,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        env: EnvConfig,
        reward: RewardModelParams,
        world: Arc<WorldSpec>,
    ) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let state = TrainerState::new(&config, env.observation_len());
        Ok(Self {
            config,
            env,
            reward,
            world,
            state,
        })
    }

    /// Rebuilds a trainer around previously saved state.
    pub fn from_state(
        config: TrainConfig,
        env: EnvConfig,
        reward: RewardModelParams,
        world: Arc<WorldSpec>,
        state: TrainerState,
    ) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        if state.params.input_len() != env.observation_len() {
            return Err(TrainError::Config(format!(
                "policy expects {} inputs, environment produces {}",
                state.params.input_len(),
                env.observation_len()
            )));
        }
        Ok(Self {
            config,
            env,
            reward,
            world,
            state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env
    }

    pub fn reward_params(&self) -> &RewardModelParams {
        &self.reward
    }

    pub fn world(&self) -> &Arc<WorldSpec> {
        &self.world
    }

    /// Points future rollouts at another world. Learned state is untouched.
    pub fn set_world(&mut self, world: Arc<WorldSpec>) {
        self.world = world;
    }

    pub fn set_num_workers(&mut self, workers: usize) {
        self.config.num_workers = workers.max(1);
    }

    pub fn train_iteration(&mut self) -> Result<IterationResult, TrainError> {
        let iteration = self.state.iteration;
        let batch = collect_batch(
            &self.state.params,
            &CollectSpec {
                world: &self.world,
                env: &self.env,
                reward: &self.reward,
                batch_size: self.config.train_batch_size,
                num_workers: self.config.num_workers,
                seed: self.config.seed,
                iteration,
            },
        )?;
        let advantages = compute_gae(
            &batch,
            self.config.discount_gamma,
            self.config.gae_lambda,
            self.config.advantage_normalization,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[SeedStream::Sgd as u64, iteration]));
        let state = &mut self.state;
        let update = ppo_update(
            &mut state.params,
            &mut state.optimizer,
            &batch,
            &advantages,
            &mut state.kl_coeff,
            &self.config,
            &mut rng,
        )?;
        state.iteration += 1;
        Ok(IterationResult {
            iteration: state.iteration,
            steps: batch.len(),
            episodes: batch.episodes,
            update,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardModel;

    fn tiny() -> Trainer {
        let config = TrainConfig {
            train_batch_size: 300,
            hidden_layers: vec![8, 8],
            epochs_per_iteration: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        Trainer::new(
            config,
            EnvConfig::default(),
            RewardModelParams::new(RewardModel::Two),
            Arc::new(WorldSpec::empty_room()),
        )
        .unwrap()
    }

    #[test]
    fn iteration_counter_and_determinism() {
        let mut a = tiny();
        let mut b = tiny();
        let ra = a.train_iteration().unwrap();
        assert_eq!(ra.iteration, 1);
        assert_eq!(a.state.iteration, 1);
        assert_eq!(ra.steps, 300);
        assert_eq!(ra, b.train_iteration().unwrap());
        assert_eq!(a.state.checksum(), b.state.checksum());
        a.train_iteration().unwrap();
        assert_eq!(a.state.iteration, 2);
        assert_ne!(a.state.checksum(), b.state.checksum());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let config = TrainConfig {
            minibatch_size: 0,
            ..TrainConfig::default()
        };
        let err = Trainer::new(
            config,
            EnvConfig::default(),
            RewardModelParams::new(RewardModel::One),
            Arc::new(WorldSpec::empty_room()),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::Config(_)));
    }
}

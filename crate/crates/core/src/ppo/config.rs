use serde::{Deserialize, Serialize};

/// PPO hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gae_lambda: f64,
    pub kl_coeff_initial: f64,
    pub kl_target: f64,
    /// Environment steps collected per iteration.
    pub train_batch_size: usize,
    pub minibatch_size: usize,
    pub epochs_per_iteration: usize,
    pub clip_param: f64,
    pub discount_gamma: f64,
    pub value_loss_coeff: f64,
    pub entropy_coeff: f64,
    pub hidden_layers: Vec<usize>,
    pub advantage_normalization: bool,
    pub seed: u64,
    pub num_workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            gae_lambda: 1.0,
            kl_coeff_initial: 0.2,
            kl_target: 0.01,
            train_batch_size: 10_000,
            minibatch_size: 128,
            epochs_per_iteration: 30,
            clip_param: 0.3,
            discount_gamma: 0.99,
            value_loss_coeff: 1.0,
            entropy_coeff: 0.0,
            hidden_layers: vec![256, 256],
            advantage_normalization: true,
            seed: 0,
            num_workers: 1,
        }
    }
}

impl TrainConfig {
    /// Reduced scale for a desktop CPU: 4,000-step batches and a [64, 64]
    /// network, all other settings unchanged.
    pub fn desk() -> Self {
        Self {
            train_batch_size: 4_000,
            hidden_layers: vec![64, 64],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            problems.push("gae_lambda must lie in [0, 1]");
        }
        if !(self.discount_gamma > 0.0 && self.discount_gamma <= 1.0) {
            problems.push("discount_gamma must lie in (0, 1]");
        }
        if self.train_batch_size == 0 || self.minibatch_size == 0 {
            problems.push("batch sizes must be positive");
        }
        if self.epochs_per_iteration == 0 {
            problems.push("epochs_per_iteration must be positive");
        }
        if self.clip_param.is_nan() || self.clip_param <= 0.0 {
            problems.push("clip_param must be positive");
        }
        if !(self.kl_coeff_initial >= 0.0 && self.kl_target > 0.0) {
            problems.push("kl_coeff_initial must be >= 0 and kl_target > 0");
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            problems.push("hidden_layers must be non-empty with positive widths");
        }
        if self.num_workers == 0 {
            problems.push("num_workers must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

//! Proximal policy optimization with generalized advantage estimation and
//! an adaptive KL penalty, implemented on plain ndarray MLPs.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{EnvError, ACTION_COUNT};

pub mod config;
pub mod gae;
pub mod nn;
pub mod policy;
pub mod rollout;
pub mod trainer;
pub mod update;

pub use config::TrainConfig;
pub use gae::{compute_gae, Advantages};
pub use nn::{Adam, Mlp};
pub use policy::{featurize, policy_forward, sample_action, PolicyParams, VALUE_SCALE};
pub use rollout::{collect_batch, CollectSpec, EpisodeEnd, EpisodeSummary, RolloutBatch};
pub use trainer::{IterationResult, Trainer, TrainerState};
pub use update::{ppo_update, UpdateStats};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(
        "non-finite loss at epoch {epoch}, minibatch {minibatch}: total={total} \
         policy={policy_loss} value={value_loss} kl={kl} kl_coeff={kl_coeff}"
    )]
    NonFinite {
        epoch: usize,
        minibatch: usize,
        total: f64,
        policy_loss: f64,
        value_loss: f64,
        kl: f64,
        kl_coeff: f64,
    },
    #[error("parameters became non-finite after an update")]
    NonFiniteParams,
}

/// Independent RNG streams derived from one run seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum SeedStream {
    Init = 1,
    Rollout = 2,
    Sgd = 3,
    Eval = 4,
}

/// Mixes a base seed with stream tags (splitmix64 finalizer per word).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

/// Identifies the network interface a checkpoint was trained for:
/// observation length, action count, hidden widths and critic output scale.
pub fn architecture_hash(observation_len: usize, hidden_layers: &[usize]) -> u64 {
    let descriptor = format!(
        "obs={observation_len};actions={ACTION_COUNT};hidden={hidden_layers:?};act=tanh;\
         value_scale={VALUE_SCALE}"
    );
    let digest = Sha256::digest(descriptor.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

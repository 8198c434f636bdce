//! Actor and critic networks, observation featurizer and the categorical
//! action distribution.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_traits::ToPrimitive;
use rand::Rng;

use super::nn::{Mlp, Scalar};
use crate::env::{EnvConfig, Observation, ACTION_COUNT};

/// Normalizer for the goal distance: the diagonal of a 30 m square room.
pub const DISTANCE_SCALE: f64 = 30.0 * std::f64::consts::SQRT_2;

/// Maps an observation onto `[-1, 1]` features: heading / pi,
/// distance / (30 sqrt 2), lidar / max range.
pub fn featurize(obs: &Observation, cfg: &EnvConfig) -> Vec<f32> {
    let mut features = Vec::with_capacity(2 + obs.lidar.len());
    features.push((obs.heading_error / PI) as f32);
    features.push((obs.distance / DISTANCE_SCALE).min(1.0) as f32);
    features.extend(obs.lidar.iter().map(|&r| (r / cfg.lidar_max_range).min(1.0) as f32));
    features
}

/// Fixed multiplier on the critic's linear output. Returns reach the
/// thousands (the goal bonus is 2000) while a unit-gain output layer starts
/// near 1; at the small learning rate the unscaled critic takes most of a
/// desk run to reach that range and the advantages stay dominated by
/// baseline error in the meantime.
pub const VALUE_SCALE: f64 = 100.0;

/// Separate actor (logits) and critic (state value) networks.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<F> {
    pub actor: Mlp<F>,
    pub critic: Mlp<F>,
}

impl<F: Scalar> PolicyParams<F> {
    pub fn zeros(input_len: usize, hidden: &[usize]) -> Self {
        Self {
            actor: Mlp::zeros(&layer_sizes(input_len, hidden, ACTION_COUNT)),
            critic: Mlp::zeros(&layer_sizes(input_len, hidden, 1)),
        }
    }

    /// Orthogonal init; the actor's output layer is scaled by 0.01 so the
    /// initial policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(input_len: usize, hidden: &[usize], rng: &mut R) -> Self {
        let actor = Mlp::orthogonal(&layer_sizes(input_len, hidden, ACTION_COUNT), 0.01, rng);
        let critic = Mlp::orthogonal(&layer_sizes(input_len, hidden, 1), 1.0, rng);
        Self { actor, critic }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.critic.param_count()
    }

    /// Actor slices followed by critic slices.
    pub fn param_slices(&self) -> Vec<&[F]> {
        let mut slices = self.actor.param_slices();
        slices.extend(self.critic.param_slices());
        slices
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut slices = self.actor.param_slices_mut();
        slices.extend(self.critic.param_slices_mut());
        slices
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critic.all_finite()
    }

    /// Batched evaluation: `(logits [n, 15], values [n, 1])`.
    pub fn forward_batch(&self, features: ArrayView2<F>) -> (Array2<F>, Array2<F>) {
        (self.actor.forward(features), self.critic_values(features))
    }

    /// Critic output multiplied by [`VALUE_SCALE`].
    pub fn critic_values(&self, features: ArrayView2<F>) -> Array2<F> {
        let scale = F::from_f64(VALUE_SCALE).expect("representable scale");
        self.critic.forward(features).mapv_into(|v| v * scale)
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// Evaluates a single feature vector.
pub fn policy_forward<F: Scalar>(params: &PolicyParams<F>, features: &[F]) -> (Vec<F>, F) {
    assert_eq!(features.len(), params.input_len(), "feature length mismatch");
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row vector");
    let (logits, value) = params.forward_batch(x);
    (logits.row(0).to_vec(), value[[0, 0]])
}

/// Numerically stable log-softmax, evaluated in f64.
pub fn log_softmax<F: ToPrimitive>(logits: &[F]) -> Vec<f64> {
    let z: Vec<f64> = logits.iter().map(|v| v.to_f64().expect("finite logit")).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    z.iter().map(|v| v - log_sum).collect()
}

pub fn softmax<F: ToPrimitive>(logits: &[F]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Draws an action from `softmax(logits)`, or takes the first argmax when
/// `deterministic`. Returns the index and its log-probability.
pub fn sample_action<F: ToPrimitive, R: Rng + ?Sized>(logits: &[F], deterministic: bool, rng: &mut R) -> (usize, f64) {
    let log_probs = log_softmax(logits);
    let index = if deterministic {
        let mut best = 0;
        for (i, &lp) in log_probs.iter().enumerate() {
            if lp > log_probs[best] {
                best = i;
            }
        }
        best
    } else {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut chosen = log_probs.len() - 1;
        for (i, &lp) in log_probs.iter().enumerate() {
            cumulative += lp.exp();
            if u < cumulative {
                chosen = i;
                break;
            }
        }
        chosen
    };
    (index, log_probs[index])
}

//! PPO optimization step: clipped surrogate plus adaptive KL penalty for the
//! actor, squared error for the critic, minimized with Adam over shuffled
//! minibatches.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::gae::Advantages;
use super::nn::{Adam, Scalar};
use super::policy::{log_softmax, PolicyParams, VALUE_SCALE};
use super::rollout::RolloutBatch;
use super::TrainError;
use crate::env::ACTION_COUNT;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub clip_param: f64,
    pub value_loss_coeff: f64,
    pub entropy_coeff: f64,
}

impl From<&TrainConfig> for LossSettings {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            clip_param: cfg.clip_param,
            value_loss_coeff: cfg.value_loss_coeff,
            entropy_coeff: cfg.entropy_coeff,
        }
    }
}

/// Training samples for one gradient step.
#[derive(Clone, Debug)]
pub struct Minibatch<F> {
    pub features: Array2<F>,
    pub actions: Vec<usize>,
    /// Behavior log-softmax over all actions, `[n, ACTION_COUNT]`.
    pub old_log_probs: Array2<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl<F> Minibatch<F> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Minibatch means of the loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    /// Negated clipped surrogate.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
}

impl LossTerms {
    fn is_finite(&self) -> bool {
        [self.total, self.policy_loss, self.value_loss, self.kl, self.entropy]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_kl: f64,
    pub entropy: f64,
    pub kl_coeff_after: f64,
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`
/// and its derivative with respect to the log-ratio.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// KL coefficient adaptation: x1.5 above twice the target, x0.5 below half.
pub fn adapt_kl_coeff(kl_coeff: f64, mean_kl: f64, kl_target: f64) -> f64 {
    if mean_kl > 2.0 * kl_target {
        kl_coeff * 1.5
    } else if mean_kl < 0.5 * kl_target {
        kl_coeff * 0.5
    } else {
        kl_coeff
    }
}

/// Evaluates the minibatch loss
/// `-surrogate + kl_coeff KL(old || new) + c_v (V - target)^2 - c_e H`
/// (all averaged), and its gradient when `with_gradient` is set.
pub fn minibatch_loss<F: Scalar>(
    params: &PolicyParams<F>,
    mb: &Minibatch<F>,
    kl_coeff: f64,
    settings: &LossSettings,
    with_gradient: bool,
) -> (LossTerms, Option<PolicyParams<F>>) {
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let x = mb.features.view();
    let (logits, actor_cache) = params.actor.forward_cached(x);
    let (values, critic_cache) = params.critic.forward_cached(x);

    let mut terms = LossTerms::default();
    let mut grad_logits = Array2::<F>::zeros((n, ACTION_COUNT));
    let mut grad_values = Array2::<F>::zeros((n, 1));
    let cast = |v: f64| F::from_f64(v).expect("finite gradient");

    for i in 0..n {
        let row = logits.row(i);
        let log_p = log_softmax(row.as_slice().expect("contiguous"));
        let old = mb.old_log_probs.row(i);
        let a = mb.actions[i];
        let ratio = (log_p[a] - old[a]).exp();
        let (surrogate, d_surr_d_logp) = clipped_surrogate(ratio, mb.advantages[i], settings.clip_param);

        let mut kl = 0.0;
        let mut old_mass = 0.0;
        let mut entropy = 0.0;
        for j in 0..ACTION_COUNT {
            let po = old[j].exp();
            kl += po * (old[j] - log_p[j]);
            old_mass += po;
            entropy -= log_p[j].exp() * log_p[j];
        }

        let v = values[[i, 0]].to_f64().expect("finite value") * VALUE_SCALE;
        let err = v - mb.value_targets[i];
        terms.policy_loss -= surrogate * inv_n;
        terms.kl += kl * inv_n;
        terms.entropy += entropy * inv_n;
        terms.value_loss += err * err * inv_n;

        if with_gradient {
            for j in 0..ACTION_COUNT {
                let p = log_p[j].exp();
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_policy = -d_surr_d_logp * (onehot - p);
                let d_kl = kl_coeff * (p * old_mass - old[j].exp());
                let d_entropy = settings.entropy_coeff * p * (log_p[j] + entropy);
                grad_logits[[i, j]] = cast((d_policy + d_kl + d_entropy) * inv_n);
            }
            grad_values[[i, 0]] = cast(settings.value_loss_coeff * 2.0 * err * inv_n * VALUE_SCALE);
        }
    }
    terms.total = terms.policy_loss + kl_coeff * terms.kl + settings.value_loss_coeff * terms.value_loss
        - settings.entropy_coeff * terms.entropy;

    let grads = with_gradient.then(|| {
        let mut grads = params.zeros_like();
        params.actor.backward(&actor_cache, grad_logits, &mut grads.actor);
        params.critic.backward(&critic_cache, grad_values, &mut grads.critic);
        grads
    });
    (terms, grads)
}

/// Runs `epochs_per_iteration` passes of shuffled minibatch Adam steps over
/// the batch, then adapts `kl_coeff`. Reported statistics are averages over
/// the minibatches of the final epoch.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams<f32>,
    optimizer: &mut Adam<f32>,
    batch: &RolloutBatch,
    advantages: &Advantages,
    kl_coeff: &mut f64,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats, TrainError> {
    let n = batch.len();
    let settings = LossSettings::from(config);
    let mut old_log_probs = Array2::<f64>::zeros((n, ACTION_COUNT));
    for i in 0..n {
        for (j, lp) in log_softmax(batch.logits_row(i)).into_iter().enumerate() {
            old_log_probs[[i, j]] = lp;
        }
    }
    let features = ArrayView2::from_shape((n, batch.feature_len), &batch.features).expect("feature matrix shape");

    let mut order: Vec<usize> = (0..n).collect();
    let mut last_epoch = LossTerms::default();
    for epoch in 0..config.epochs_per_iteration {
        order.shuffle(rng);
        let mut sums = LossTerms::default();
        let mut count = 0usize;
        for (index, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let mb = Minibatch {
                features: features.select(ndarray::Axis(0), chunk),
                actions: chunk.iter().map(|&i| batch.actions[i]).collect(),
                old_log_probs: old_log_probs.select(ndarray::Axis(0), chunk),
                advantages: chunk.iter().map(|&i| advantages.advantages[i]).collect(),
                value_targets: chunk.iter().map(|&i| advantages.value_targets[i]).collect(),
            };
            let (terms, grads) = minibatch_loss(params, &mb, *kl_coeff, &settings, true);
            if !terms.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    minibatch: index,
                    total: terms.total,
                    policy_loss: terms.policy_loss,
                    value_loss: terms.value_loss,
                    kl: terms.kl,
                    kl_coeff: *kl_coeff,
                });
            }
            let grads = grads.expect("gradient requested");
            optimizer.apply(params.param_slices_mut(), grads.param_slices(), config.learning_rate);
            sums.policy_loss += terms.policy_loss;
            sums.value_loss += terms.value_loss;
            sums.kl += terms.kl;
            sums.entropy += terms.entropy;
            count += 1;
        }
        let c = count.max(1) as f64;
        last_epoch = LossTerms {
            total: 0.0,
            policy_loss: sums.policy_loss / c,
            value_loss: sums.value_loss / c,
            kl: sums.kl / c,
            entropy: sums.entropy / c,
        };
    }
    if !params.all_finite() {
        return Err(TrainError::NonFiniteParams);
    }
    *kl_coeff = adapt_kl_coeff(*kl_coeff, last_epoch.kl, config.kl_target);
    Ok(UpdateStats {
        policy_loss: last_epoch.policy_loss,
        value_loss: last_epoch.value_loss,
        mean_kl: last_epoch.kl,
        entropy: last_epoch.entropy,
        kl_coeff_after: *kl_coeff,
    })
}

//! Generalized advantage estimation over the episode segments of a batch.

use super::rollout::RolloutBatch;

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

/// Standard GAE recursion, restarted at every segment end. Value targets are
/// `raw advantage + value`; advantages are then optionally standardized.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lambda: f64, normalize: bool) -> Advantages {
    let n = batch.len();
    let mut advantages = vec![0.0; n];
    let (mut next_value, mut next_advantage) = (0.0, 0.0);
    for t in (0..n).rev() {
        if batch.segment_end[t] {
            next_value = batch.bootstrap[t];
            next_advantage = 0.0;
        }
        let delta = batch.rewards[t] + gamma * next_value - batch.values[t];
        let advantage = delta + gamma * lambda * next_advantage;
        advantages[t] = advantage;
        next_value = batch.values[t];
        next_advantage = advantage;
    }
    let value_targets = advantages.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    if normalize {
        standardize(&mut advantages);
    }
    Advantages {
        advantages,
        value_targets,
    }
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

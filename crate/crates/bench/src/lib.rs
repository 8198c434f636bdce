//! Fixtures for the hot-path benchmarks: free sample points, a warmed-up
//! environment and random minibatches at the training shapes.

use std::sync::Arc;

use inavrl::ppo::policy::log_softmax;
use inavrl::ppo::update::Minibatch;
use inavrl::ppo::PolicyParams;
use inavrl::{EnvConfig, NavEnv, RewardModel, RewardModelParams, Vec2, WorldSpec, ACTION_COUNT};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in free space of `world`.
pub fn free_points(world: &WorldSpec, count: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = rng(seed);
    let b = *world.bounds();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y));
        if world.is_free(p) {
            out.push(p);
        }
    }
    out
}

/// An environment reset into its first episode.
pub fn ready_env(world: WorldSpec, seed: u64) -> (NavEnv, ChaCha8Rng) {
    let mut rng = rng(seed);
    let mut env = NavEnv::new(
        Arc::new(world),
        EnvConfig::default(),
        RewardModelParams::new(RewardModel::Two),
    );
    env.reset(&mut rng).expect("bundled worlds reset");
    (env, rng)
}

pub fn policy(hidden: &[usize], seed: u64) -> PolicyParams<f32> {
    PolicyParams::init(EnvConfig::default().observation_len(), hidden, &mut rng(seed))
}

pub fn features(rows: usize, seed: u64) -> Array2<f32> {
    let mut rng = rng(seed);
    let len = EnvConfig::default().observation_len();
    Array2::from_shape_fn((rows, len), |_| rng.random_range(-1.0..1.0))
}

pub fn minibatch(rows: usize, seed: u64) -> Minibatch<f32> {
    let mut rng = rng(seed);
    let mut old_log_probs = Array2::zeros((rows, ACTION_COUNT));
    for i in 0..rows {
        let logits: Vec<f64> = (0..ACTION_COUNT).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (j, lp) in log_softmax(&logits).into_iter().enumerate() {
            old_log_probs[[i, j]] = lp;
        }
    }
    Minibatch {
        features: features(rows, seed ^ 1),
        actions: (0..rows).map(|_| rng.random_range(0..ACTION_COUNT)).collect(),
        old_log_probs,
        advantages: (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect(),
        value_targets: (0..rows).map(|_| rng.random_range(-500.0..2000.0)).collect(),
    }
}

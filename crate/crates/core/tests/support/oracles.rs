//! Independent oracles shared by the core tests and the acceptance target.
//! Each check returns a one-line summary on success and a description of
//! the first disagreement on failure.

#![allow(dead_code)]

use std::f64::consts::PI;

use inavrl::ppo::policy::log_softmax;
use inavrl::ppo::update::{minibatch_loss, LossSettings, Minibatch};
use inavrl::ppo::{compute_gae, EpisodeEnd, EpisodeSummary, PolicyParams, RolloutBatch};
use inavrl::reward::{progress_distance, progress_heading, terminal_reward};
use inavrl::{RewardModel, RewardModelParams, StepOutcome, Vec2, WorldSpec, ACTION_COUNT};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, want {want}"))
    }
}

/// Reward table derived by hand from the heading and distance formulas.
pub fn check_reward_table() -> Check {
    let one = RewardModelParams::new(RewardModel::One);
    let two = RewardModelParams::new(RewardModel::Two);
    // Penalty branch at |h| = pi: (45/17)(1 - 1/18) = 2.5, times (1 + w v).
    close("heading(pi, 1, model 1)", progress_heading(PI, 1.0, &one), -5.0, 1e-12)?;
    close("heading(pi, 1, model 2)", progress_heading(PI, 1.0, &two), -10.0, 1e-12)?;
    // |h| = pi/2, v = 0: (45/17)(1/2 - 1/18) = 20/17.
    for (name, p) in [("model 1", &one), ("model 2", &two)] {
        close(
            &format!("heading(pi/2, 0, {name})"),
            progress_heading(PI / 2.0, 0.0, p),
            -20.0 / 17.0,
            1e-12,
        )?;
        close(
            &format!("heading(-pi/2, 0, {name})"),
            progress_heading(-PI / 2.0, 0.0, p),
            -20.0 / 17.0,
            1e-12,
        )?;
        // Inside the 20 degree cone: 5 v.
        close(
            &format!("heading(10 deg, 0.5, {name})"),
            progress_heading(10f64.to_radians(), 0.5, p),
            2.5,
            1e-12,
        )?;
        close(
            &format!("distance(10, 9.7, {name})"),
            progress_distance(10.0, 9.7, p),
            12.0,
            1e-12,
        )?;
        close("goal", terminal_reward(StepOutcome::Goal, p), 2000.0, 0.0)?;
        close("collision", terminal_reward(StepOutcome::Collision, p), -500.0, 0.0)?;
        close("time penalty", p.time_penalty, -1.0, 0.0)?;
    }
    Ok("heading, distance and terminal values exact to 1e-12".into())
}

struct Episode {
    rewards: Vec<f64>,
    values: Vec<f64>,
    bootstrap: f64,
}

fn discounted_targets(ep: &Episode, gamma: f64) -> Vec<f64> {
    // Direct sums, no recursion: G_t = sum_k gamma^k r_{t+k} + gamma^(T-t) V_boot.
    let n = ep.rewards.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            for k in t..n {
                g += gamma.powi((k - t) as i32) * ep.rewards[k];
            }
            g + gamma.powi((n - t) as i32) * ep.bootstrap
        })
        .collect()
}

/// GAE with lambda = 1 against Monte-Carlo discounted returns.
pub fn check_gae_monte_carlo(episodes: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = 0.99;
    let mut eps = Vec::new();
    for _ in 0..episodes {
        let len = rng.random_range(1..=60);
        let terminal = rng.random_bool(0.5);
        eps.push(Episode {
            rewards: (0..len).map(|_| rng.random_range(-50.0..50.0)).collect(),
            values: (0..len).map(|_| rng.random_range(-500.0..500.0)).collect(),
            bootstrap: if terminal {
                0.0
            } else {
                rng.random_range(-500.0..2000.0)
            },
        });
    }
    let mut batch = RolloutBatch::new(1);
    for ep in &eps {
        let n = ep.rewards.len();
        batch.rewards.extend(&ep.rewards);
        batch.values.extend(&ep.values);
        batch.actions.extend(std::iter::repeat_n(0, n));
        batch.segment_end.extend((0..n).map(|i| i + 1 == n));
        batch
            .bootstrap
            .extend((0..n).map(|i| if i + 1 == n { ep.bootstrap } else { 0.0 }));
        batch.episodes.push(EpisodeSummary {
            end: if ep.bootstrap == 0.0 {
                EpisodeEnd::Goal
            } else {
                EpisodeEnd::Timeout
            },
            length: n,
            total_return: ep.rewards.iter().sum(),
        });
    }
    let adv = compute_gae(&batch, gamma, 1.0, false);
    let (mut offset, mut worst) = (0, 0.0f64);
    for ep in &eps {
        for (t, g) in discounted_targets(ep, gamma).into_iter().enumerate() {
            let i = offset + t;
            let target_err = (adv.value_targets[i] - g).abs() / g.abs().max(1.0);
            let a = g - ep.values[t];
            let adv_err = (adv.advantages[i] - a).abs() / a.abs().max(1.0);
            worst = worst.max(target_err).max(adv_err);
            if worst > 1e-9 {
                return Err(format!("step {i}: relative error {worst:e}"));
            }
        }
        offset += ep.rewards.len();
    }
    Ok(format!(
        "{episodes} episodes, {offset} steps, worst relative error {worst:.1e}"
    ))
}

/// Walks the ray in 1 mm steps until the point leaves the arena or enters an
/// obstacle (closed rectangles).
pub fn marching_oracle(world: &WorldSpec, origin: Vec2, angle: f64, max_range: f64) -> f64 {
    let dir = Vec2::new(angle.cos(), angle.sin());
    let b = world.bounds();
    let blocked = |p: Vec2| {
        p.x <= b.min.x
            || p.x >= b.max.x
            || p.y <= b.min.y
            || p.y >= b.max.y
            || world
                .obstacles()
                .iter()
                .any(|o| p.x >= o.min.x && p.x <= o.max.x && p.y >= o.min.y && p.y <= o.max.y)
    };
    let mut t = 0.0;
    while t < max_range {
        let next = t + 1e-3;
        if blocked(origin + dir * next) {
            return next;
        }
        t = next;
    }
    max_range
}

/// Exact raycast against the marching oracle on random rays from free
/// points of both bundled worlds.
pub fn check_raycast(rays_per_world: usize) -> Check {
    let mut worst = 0.0f64;
    for (world, seed) in [(WorldSpec::empty_room(), 1u64), (WorldSpec::obstacle_room(), 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = *world.bounds();
        let mut checked = 0;
        while checked < rays_per_world {
            let origin = Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y));
            if !world.is_free(origin) {
                continue;
            }
            let angle = rng.random_range(-PI..PI);
            let fast = world.raycast(origin, angle, 10.0);
            let slow = marching_oracle(&world, origin, angle, 10.0);
            worst = worst.max((fast - slow).abs());
            if (fast - slow).abs() > 2e-3 {
                return Err(format!(
                    "{}: origin {origin} angle {angle}: raycast {fast}, marching {slow}",
                    world.name()
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{rays_per_world} rays per world, worst deviation {:.2} mm",
        worst * 1e3
    ))
}

fn nudge(params: &mut PolicyParams<f64>, mut index: usize, delta: f64) {
    for slice in params.param_slices_mut() {
        if index < slice.len() {
            slice[index] += delta;
            return;
        }
        index -= slice.len();
    }
    panic!("parameter index out of range");
}

/// Random toy minibatch whose probability ratios stay at least 1e-2 away
/// from the clip kinks, so the loss is smooth around the evaluation point.
fn toy_minibatch(params: &PolicyParams<f64>, rng: &mut ChaCha8Rng, clip: f64) -> Minibatch<f64> {
    let n = 6;
    let inputs = params.input_len();
    let features = Array2::from_shape_fn((n, inputs), |_| rng.random_range(-1.0..1.0));
    let logits = params.actor.forward(features.view());
    let mut actions = Vec::new();
    let mut old = Array2::zeros((n, ACTION_COUNT));
    for i in 0..n {
        let current = log_softmax(logits.row(i).as_slice().unwrap());
        let action = rng.random_range(0..ACTION_COUNT);
        loop {
            let shifted: Vec<f64> = current
                .iter()
                .map(|lp| lp + 0.4 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let behavior = log_softmax(&shifted);
            let ratio = (current[action] - behavior[action]).exp();
            if (ratio - (1.0 - clip)).abs() > 1e-2 && (ratio - (1.0 + clip)).abs() > 1e-2 {
                for (j, lp) in behavior.into_iter().enumerate() {
                    old[[i, j]] = lp;
                }
                break;
            }
        }
        actions.push(action);
    }
    Minibatch {
        features,
        actions,
        old_log_probs: old,
        advantages: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        value_targets: (0..n).map(|_| rng.random_range(-300.0..300.0)).collect(),
    }
}

/// Analytic loss gradients against central finite differences on random
/// toy networks.
pub fn check_gradients(trials: u64) -> Check {
    let settings = LossSettings {
        clip_param: 0.3,
        value_loss_coeff: 1.0,
        entropy_coeff: 0.05,
    };
    let h = 1e-4;
    let mut worst_overall = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let hidden: Vec<usize> = if trial % 2 == 0 { vec![3] } else { vec![3, 3] };
        let mut params = PolicyParams::<f64>::init(4, &hidden, &mut rng);
        // Larger output weights than the near-uniform init, so the softmax
        // and critic terms are exercised away from zero.
        for layer in [&mut params.actor, &mut params.critic] {
            let last = layer.layers.last_mut().unwrap();
            last.weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            last.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let mb = toy_minibatch(&params, &mut rng, settings.clip_param);
        let kl_coeff = rng.random_range(0.0..1.0);
        let (_, grads) = minibatch_loss(&params, &mb, kl_coeff, &settings, true);
        let analytic = grads.unwrap().param_slices().concat();

        let mut numeric = vec![0.0; analytic.len()];
        for (k, g) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            nudge(&mut plus, k, h);
            let mut minus = params.clone();
            nudge(&mut minus, k, -h);
            let fp = minibatch_loss(&plus, &mb, kl_coeff, &settings, false).0.total;
            let fm = minibatch_loss(&minus, &mb, kl_coeff, &settings, false).0.total;
            *g = (fp - fm) / (2.0 * h);
        }
        // Compared tensor by tensor: critic gradients are orders of magnitude
        // larger than actor gradients and would hide actor errors in a
        // global norm.
        let mut offset = 0;
        for (t, len) in params.param_slices().iter().map(|s| s.len()).enumerate() {
            let a = &analytic[offset..offset + len];
            let n = &numeric[offset..offset + len];
            let scale = n.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
            let worst = a.iter().zip(n).fold(0.0f64, |m, (a, n)| m.max((a - n).abs())) / scale;
            if worst > 1e-4 {
                return Err(format!("trial {trial}, tensor {t}: relative gradient error {worst:e}"));
            }
            worst_overall = worst_overall.max(worst);
            offset += len;
        }
    }
    Ok(format!(
        "{trials} toy networks, worst relative error {worst_overall:.1e}"
    ))
}

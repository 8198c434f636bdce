//! Step reward: terminal reward, per-step time penalty, progress toward the
//! goal and a heading term that differs between the two reward models.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum RewardModel {
    /// Heading penalty scaled by `1 + v`.
    One,
    /// Heading penalty scaled by `1 + 3v`.
    Two,
}

impl RewardModel {
    pub fn id(self) -> u8 {
        match self {
            RewardModel::One => 1,
            RewardModel::Two => 2,
        }
    }
}

impl TryFrom<u8> for RewardModel {
    type Error = String;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        match id {
            1 => Ok(RewardModel::One),
            2 => Ok(RewardModel::Two),
            other => Err(format!("reward model must be 1 or 2, got {other}")),
        }
    }
}

impl From<RewardModel> for u8 {
    fn from(m: RewardModel) -> u8 {
        m.id()
    }
}

impl FromStr for RewardModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id: u8 = s
            .trim()
            .parse()
            .map_err(|_| format!("reward model must be 1 or 2, got {s:?}"))?;
        RewardModel::try_from(id)
    }
}

impl fmt::Display for RewardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Reward constants. Only `speed_weight` differs between the models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModelParams {
    pub model: RewardModel,
    pub terminal_success: f64,
    pub terminal_failure: f64,
    pub time_penalty: f64,
    /// Reward per meter of progress toward the goal.
    pub distance_gain: f64,
    /// Reward per m/s of forward speed while facing the goal.
    pub bonus_gain: f64,
    /// |heading| strictly below this earns the bonus; 20 degrees.
    pub heading_threshold: f64,
    pub slope: f64,
    pub offset: f64,
    pub speed_weight: f64,
}

impl RewardModelParams {
    pub fn new(model: RewardModel) -> Self {
        Self {
            model,
            terminal_success: 2000.0,
            terminal_failure: -500.0,
            time_penalty: -1.0,
            distance_gain: 40.0,
            bonus_gain: 5.0,
            heading_threshold: PI / 9.0,
            slope: 45.0 / 17.0,
            offset: 1.0 / 18.0,
            speed_weight: match model {
                RewardModel::One => 1.0,
                RewardModel::Two => 3.0,
            },
        }
    }
}

impl From<RewardModel> for RewardModelParams {
    fn from(model: RewardModel) -> Self {
        Self::new(model)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terminal: f64,
    pub time_penalty: f64,
    pub progress_distance: f64,
    pub progress_heading: f64,
    pub total: f64,
}

/// `distance_gain * (d_prev - d_cur)`: positive when approaching the goal.
pub fn progress_distance(d_prev: f64, d_cur: f64, params: &RewardModelParams) -> f64 {
    params.distance_gain * (d_prev - d_cur)
}

pub fn progress_heading(heading: f64, linear_speed: f64, params: &RewardModelParams) -> f64 {
    let h = heading.abs();
    if h < params.heading_threshold {
        params.bonus_gain * linear_speed
    } else {
        params.slope * (h / PI - params.offset) * -(1.0 + params.speed_weight * linear_speed)
    }
}

/// Timeouts are truncations and carry no terminal signal.
pub fn terminal_reward(outcome: StepOutcome, params: &RewardModelParams) -> f64 {
    match outcome {
        StepOutcome::Goal => params.terminal_success,
        StepOutcome::Collision => params.terminal_failure,
        StepOutcome::Timeout | StepOutcome::Running => 0.0,
    }
}

pub fn step_reward(
    d_prev: f64,
    d_cur: f64,
    heading: f64,
    linear_speed: f64,
    outcome: StepOutcome,
    params: &RewardModelParams,
) -> RewardBreakdown {
    let terminal = terminal_reward(outcome, params);
    let time_penalty = params.time_penalty;
    let progress_distance = progress_distance(d_prev, d_cur, params);
    let progress_heading = progress_heading(heading, linear_speed, params);
    RewardBreakdown {
        terminal,
        time_penalty,
        progress_distance,
        progress_heading,
        total: terminal + time_penalty + progress_distance + progress_heading,
    }
}

//! Episode simulator: planar unicycle kinematics driven by the 15 discrete
//! (speed, yaw-rate) actions, lidar/heading/distance observations and
//! goal/collision/timeout termination.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Vec2, WorldError, WorldSpec, DEFAULT_MIN_SEPARATION};
use crate::reward::{step_reward, RewardBreakdown, RewardModelParams};

pub const ACTION_COUNT: usize = 15;
pub const LINEAR_SPEEDS: [f64; 3] = [1.0, 0.5, 0.0];
pub const YAW_RATES: [f64; 5] = [-2.0 / 12.0, -1.0 / 12.0, 0.0, 1.0 / 12.0, 2.0 / 12.0];

pub const DEFAULT_VEHICLE_RADIUS: f64 = 0.3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action index {0} out of range 0..15")]
    InvalidAction(usize),
    #[error("step called on a terminated episode")]
    EpisodeOver,
    #[error("step called before reset")]
    NotReset,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Simulator constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Control period in seconds.
    pub dt: f64,
    pub lidar_beams: usize,
    pub lidar_max_range: f64,
    pub goal_radius: f64,
    pub vehicle_radius: f64,
    pub max_episode_steps: usize,
    pub min_separation: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            lidar_beams: 36,
            lidar_max_range: 10.0,
            goal_radius: 0.7,
            vehicle_radius: DEFAULT_VEHICLE_RADIUS,
            max_episode_steps: 800,
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

impl EnvConfig {
    /// Length of the observation vector: heading, distance, lidar beams.
    pub fn observation_len(&self) -> usize {
        2 + self.lidar_beams
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionCommand {
    pub linear_speed: f64,
    pub yaw_rate: f64,
}

/// Maps `index = speed_idx * 5 + yaw_idx` onto the action table.
pub fn action_decode(index: usize) -> Result<ActionCommand, EnvError> {
    if index >= ACTION_COUNT {
        return Err(EnvError::InvalidAction(index));
    }
    Ok(ActionCommand {
        linear_speed: LINEAR_SPEEDS[index / 5],
        yaw_rate: YAW_RATES[index % 5],
    })
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let mut wrapped = (angle + PI).rem_euclid(TAU) - PI;
    if wrapped >= PI {
        wrapped -= TAU;
    }
    wrapped
}

/// Wraps into `(-pi, pi]`; the boundary maps to `+pi`.
fn wrap_heading(angle: f64) -> f64 {
    let wrapped = wrap_angle(angle);
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    /// Counterclockwise from +x, in `[-pi, pi)`.
    pub theta: f64,
}

impl Pose {
    pub fn new(position: Vec2, theta: f64) -> Self {
        Self {
            position,
            theta: wrap_angle(theta),
        }
    }
}

/// Signed angle from the vehicle's facing direction to the goal bearing;
/// positive when the goal lies counterclockwise.
pub fn heading_error(pose: &Pose, goal: Vec2) -> f64 {
    debug_assert!(goal != pose.position, "heading to a coincident goal");
    wrap_heading((goal - pose.position).angle() - pose.theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub heading_error: f64,
    pub distance: f64,
    pub lidar: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    Running,
    Goal,
    Collision,
    Timeout,
}

impl StepOutcome {
    pub fn is_terminal(self) -> bool {
        self != StepOutcome::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepOutcome::Running => "Running",
            StepOutcome::Goal => "Goal",
            StepOutcome::Collision => "Collision",
            StepOutcome::Timeout => "Timeout",
        }
    }
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Running" => Ok(StepOutcome::Running),
            "Goal" => Ok(StepOutcome::Goal),
            "Collision" => Ok(StepOutcome::Collision),
            "Timeout" => Ok(StepOutcome::Timeout),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub pose: Pose,
    pub goal: Vec2,
    pub prev_distance: f64,
    /// Heading error of the last emitted observation; the reward's heading
    /// term uses this pre-move value.
    pub prev_heading: f64,
    pub step_count: usize,
    pub outcome: StepOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub outcome: StepOutcome,
    pub action: ActionCommand,
}

/// One navigation environment bound to a world.
#[derive(Clone, Debug)]
pub struct NavEnv {
    world: Arc<WorldSpec>,
    config: EnvConfig,
    reward: RewardModelParams,
    state: Option<EnvState>,
}

impl NavEnv {
    pub fn new(world: Arc<WorldSpec>, config: EnvConfig, reward: RewardModelParams) -> Self {
        Self {
            world,
            config,
            reward,
            state: None,
        }
    }

    pub fn world(&self) -> &Arc<WorldSpec> {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reward_params(&self) -> &RewardModelParams {
        &self.reward
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    /// Starts a new episode between two sampled spawn points with a uniform
    /// random initial heading.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Observation, EnvError> {
        let (start, goal) = self.world.sample_start_goal(self.config.min_separation, rng)?;
        let theta = rng.random_range(-PI..PI);
        Ok(self.reset_to(Pose::new(start, theta), goal))
    }

    /// Starts an episode from an explicit pose and goal.
    pub fn reset_to(&mut self, pose: Pose, goal: Vec2) -> Observation {
        let obs = self.observe_pose(&pose, goal);
        self.state = Some(EnvState {
            pose,
            goal,
            prev_distance: obs.distance,
            prev_heading: obs.heading_error,
            step_count: 0,
            outcome: StepOutcome::Running,
        });
        obs
    }

    pub fn observe(&self) -> Option<Observation> {
        self.state.as_ref().map(|s| self.observe_pose(&s.pose, s.goal))
    }

    fn observe_pose(&self, pose: &Pose, goal: Vec2) -> Observation {
        let n = self.config.lidar_beams;
        let lidar = (0..n)
            .map(|i| {
                let angle = pose.theta + TAU * i as f64 / n as f64;
                self.world.raycast(pose.position, angle, self.config.lidar_max_range)
            })
            .collect();
        Observation {
            heading_error: heading_error(pose, goal),
            distance: pose.position.distance(goal),
            lidar,
        }
    }

    /// Advances one control period. On Goal the vehicle stops at its closest
    /// approach to the goal; on Collision it stays where the step began.
    pub fn step(&mut self, action_index: usize) -> Result<Transition, EnvError> {
        let action = action_decode(action_index)?;
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        if state.outcome.is_terminal() {
            return Err(EnvError::EpisodeOver);
        }
        let cfg = &self.config;
        let p0 = state.pose.position;
        let p1 = p0 + Vec2::from_angle(state.pose.theta) * (action.linear_speed * cfg.dt);
        let theta = state.pose.theta - action.yaw_rate * cfg.dt;

        let (outcome, position) = if point_segment_distance(state.goal, p0, p1) <= cfg.goal_radius {
            (StepOutcome::Goal, closest_point(state.goal, p0, p1))
        } else if self.world.swept_clearance_below(p0, p1, cfg.vehicle_radius) {
            (StepOutcome::Collision, p0)
        } else if state.step_count + 1 >= cfg.max_episode_steps {
            (StepOutcome::Timeout, p1)
        } else {
            (StepOutcome::Running, p1)
        };

        let pose = Pose::new(position, theta);
        let observation = self.observe_pose(&pose, state.goal);
        let reward = step_reward(
            state.prev_distance,
            observation.distance,
            state.prev_heading,
            action.linear_speed,
            outcome,
            &self.reward,
        );
        let state = self.state.as_mut().expect("checked above");
        state.pose = pose;
        state.prev_distance = observation.distance;
        state.prev_heading = observation.heading_error;
        state.step_count += 1;
        state.outcome = outcome;
        Ok(Transition {
            observation,
            reward,
            outcome,
            action,
        })
    }
}

fn closest_point(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return a;
    }
    a + ab * ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
}

/// One row of a trajectory trace. Row 0 is the initial pose and carries no
/// action or reward.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub action_index: Option<usize>,
    pub reward_total: Option<f64>,
    pub outcome: StepOutcome,
}

pub const TRACE_HEADER: &str = "step,x,y,theta,action_index,reward_total,outcome";

pub fn write_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let action = r.action_index.map(|a| a.to_string()).unwrap_or_default();
        let reward = r.reward_total.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.x, r.y, r.theta, action, reward, r.outcome
        ));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => return Err("missing trace header".into()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| format!("trace row {}: bad {what}", i + 1);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            fn opt(s: &str) -> Option<&str> {
                (!s.is_empty()).then_some(s)
            }
            Ok(TraceRow {
                step: f[0].parse().map_err(|_| bad("step"))?,
                x: f[1].parse().map_err(|_| bad("x"))?,
                y: f[2].parse().map_err(|_| bad("y"))?,
                theta: f[3].parse().map_err(|_| bad("theta"))?,
                action_index: opt(f[4]).map(str::parse).transpose().map_err(|_| bad("action_index"))?,
                reward_total: opt(f[5]).map(str::parse).transpose().map_err(|_| bad("reward_total"))?,
                outcome: f[6].parse().map_err(|_| bad("outcome"))?,
            })
        })
        .collect()
}

//! Run configuration: a profile's defaults, overlaid with an optional JSON
//! file, `--set key=value` overrides and the dedicated flags, in that order.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use inavrl::{CurriculumPlan, EnvConfig, Phase, RewardModel, TrainConfig, WorldSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// 10,000-step batches, [256, 256] networks, 200 + 100 iterations.
    Full,
    /// 4,000-step batches, [64, 64] networks, 80 + 40 iterations.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    /// `empty`, `obstacles`, or a path to a world JSON file.
    pub world: String,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub phases: Vec<PhaseConfig>,
    pub reward_model: RewardModel,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    pub deterministic_eval: bool,
    pub train: TrainConfig,
    pub env: EnvConfig,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (first, second, train) = match profile {
            Profile::Full => (200, 100, TrainConfig::default()),
            Profile::Desk => (80, 40, TrainConfig::desk()),
        };
        Self {
            phases: vec![
                PhaseConfig {
                    world: "empty".into(),
                    iterations: first,
                },
                PhaseConfig {
                    world: "obstacles".into(),
                    iterations: second,
                },
            ],
            reward_model: RewardModel::One,
            seed: 0,
            output_dir: PathBuf::from("runs/latest"),
            eval_episodes: 100,
            deterministic_eval: true,
            train,
            env: EnvConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(CliError::Config)?;
        if self.phases.is_empty() || self.phases.iter().any(|p| p.iterations == 0) {
            return Err(CliError::Config(
                "phases must be non-empty with positive iteration counts".into(),
            ));
        }
        let e = &self.env;
        let positive = [
            e.dt,
            e.lidar_max_range,
            e.goal_radius,
            e.vehicle_radius,
            e.min_separation,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || e.lidar_beams == 0 || e.max_episode_steps == 0 {
            return Err(CliError::Config("env values must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<CurriculumPlan, CliError> {
        let phases = self
            .phases
            .iter()
            .map(|p| {
                Ok(Phase {
                    world: Arc::new(load_world(&p.world)?),
                    iterations: p.iterations,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        CurriculumPlan::new(phases).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

/// Resolves a builtin world name or reads a world file.
pub fn load_world(reference: &str) -> Result<WorldSpec, CliError> {
    match reference {
        "empty" => Ok(WorldSpec::empty_room()),
        "obstacles" => Ok(WorldSpec::obstacle_room()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("world `{path}`: {e}")))?;
            WorldSpec::from_json(&text).map_err(|e| CliError::Config(format!("world `{path}`: {e}")))
        }
    }
}

/// Overlays `patch` onto `base`: objects merge key by key, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `dotted.key=value` override. The value is read as JSON when
/// it parses, otherwise as a plain string. Numeric segments index arrays.
pub fn apply_set(config: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = config;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?,
            Value::Array(items) => part
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| CliError::Config(format!("bad index in `{key}`")))?,
            _ => return Err(CliError::Config(format!("`{key}` does not name a setting"))),
        };
    }
    *slot = value;
    Ok(())
}

/// Flags shared by every command that needs a run configuration.
#[derive(Clone, Debug, Default)]
pub struct ConfigSources<'a> {
    pub profile: Option<Profile>,
    pub config_file: Option<&'a Path>,
    pub sets: &'a [String],
    pub reward_model: Option<u8>,
    pub seed: Option<u64>,
    pub output_dir: Option<&'a Path>,
    /// Worker count from the environment, applied last.
    pub workers: Option<String>,
}

pub fn resolve(sources: &ConfigSources<'_>) -> Result<RunConfig, CliError> {
    let base = RunConfig::for_profile(sources.profile.unwrap_or(Profile::Full));
    let mut value = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = sources.config_file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
        }
        merge(&mut value, patch);
    }
    for assignment in sources.sets {
        apply_set(&mut value, assignment)?;
    }
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
    if let Some(m) = sources.reward_model {
        config.reward_model = RewardModel::try_from(m).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = sources.seed {
        config.seed = seed;
    }
    if let Some(dir) = sources.output_dir {
        config.output_dir = dir.to_path_buf();
    }
    if let Some(w) = &sources.workers {
        config.train.num_workers = w
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("INAVRL_WORKERS must be a positive integer, got `{w}`")))?;
    }
    config.train.seed = config.seed;
    config.validate()?;
    Ok(config)
}

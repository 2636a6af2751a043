//! The run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subgoal_core::executor::ExecutorConfig;
use subgoal_core::milestone::{LabelConfig, RemoteConfig};
use subgoal_core::planner::{BeamConfig, MlpConfig, TrainConfig};
use subgoal_core::policy::{DatasetConfig, PolicyConfig, PolicyTrainConfig};
use subgoal_core::rng::derive_seed;
use subgoal_core::toyworld::{ExpertConfig, ScenarioKind};

use crate::error::CliError;

/// Stream tags mixed into the master seed, one per consumer.
pub mod stream {
    pub const PACK: u64 = 1;
    pub const WM_INIT: u64 = 2;
    pub const WM_TRAIN: u64 = 3;
    pub const POLICY_INIT: u64 = 4;
    pub const POLICY_DATA: u64 = 5;
    pub const POLICY_TRAIN: u64 = 6;
    pub const ROLLOUT: u64 = 7;
    pub const EVAL: u64 = 8;
}

pub const RESOLVED_NAME: &str = "resolved_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub kind: ScenarioKind,
    pub count: usize,
    /// Seed of scenario generation.
    pub seed: u64,
    /// Perturbation of the recorded demonstrations.
    pub expert: ExpertConfig,
}

impl Default for WorldSection {
    fn default() -> Self {
        WorldSection { kind: ScenarioKind::InDomain, count: 20, seed: 0, expert: ExpertConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Rule,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MilestoneSection {
    pub label: LabelConfig,
    pub annotator: AnnotatorKind,
    pub remote: RemoteConfig,
}

impl Default for MilestoneSection {
    fn default() -> Self {
        MilestoneSection { label: LabelConfig::default(), annotator: AnnotatorKind::Rule, remote: RemoteConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    /// Random windows packed per episode, besides the episode-start window.
    pub windows_per_episode: usize,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection { windows_per_episode: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Count,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountSection {
    /// Context length; `null` conditions on the whole history.
    pub order: Option<usize>,
    /// Additive smoothing.
    pub alpha: f64,
}

impl Default for CountSection {
    fn default() -> Self {
        CountSection { order: None, alpha: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub model: PlannerKind,
    pub count: CountSection,
    pub mlp: MlpConfig,
    pub train: TrainConfig,
    pub beam: BeamConfig,
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            model: PlannerKind::Count,
            count: CountSection::default(),
            mlp: MlpConfig::default(),
            train: TrainConfig::default(),
            beam: BeamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub net: PolicyConfig,
    pub dataset: DatasetConfig,
    pub train: PolicyTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub kind: ScenarioKind,
    pub count: usize,
    pub seed: u64,
}

impl SetSpec {
    /// Parses `kind:count:seed`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::validation(format!("scenario set {s:?} is not kind:count:seed"));
        let [kind, count, seed] = parts[..] else { return Err(bad()) };
        Ok(SetSpec {
            kind: kind.parse().map_err(|_| bad())?,
            count: count.parse().map_err(|_| bad())?,
            seed: seed.parse().map_err(|_| bad())?,
        })
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub rollouts: usize,
    pub sets: Vec<SetSpec>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            rollouts: 3,
            sets: ScenarioKind::ALL
                .iter()
                .enumerate()
                .map(|(i, &kind)| SetSpec { kind, count: 10, seed: 1000 + i as u64 })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream except scenario generation, which uses
    /// `world.seed`. Section seeds are mixed with it.
    pub master_seed: u64,
    /// Parent of per-command output directories when `--out` is omitted.
    pub out_dir: PathBuf,
    pub world: WorldSection,
    pub milestone: MilestoneSection,
    pub codec: CodecSection,
    pub planner: PlannerSection,
    pub policy: PolicySection,
    pub executor: ExecutorConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 0,
            out_dir: PathBuf::from("runs"),
            world: WorldSection::default(),
            milestone: MilestoneSection::default(),
            codec: CodecSection::default(),
            planner: PlannerSection::default(),
            policy: PolicySection::default(),
            executor: ExecutorConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.executor.validate().map_err(CliError::validation)?;
        if self.world.count == 0 {
            return Err(CliError::validation("world.count must be positive"));
        }
        if self.eval.rollouts == 0 {
            return Err(CliError::validation("eval.rollouts must be positive"));
        }
        Ok(())
    }

    /// Seed of one random stream, given the section's own seed.
    pub fn seed(&self, stream: u64, local: u64) -> u64 {
        derive_seed(self.master_seed, &[stream, local])
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        crate::io::write_file(&dir.join(RESOLVED_NAME), text.as_bytes())
    }
}

/// Every configuration key in dotted form with its default value.
pub fn key_listing() -> String {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            other => out.push(format!("  {prefix} = {other}")),
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(RunConfig::default()).expect("config serializes"), &mut out);
    format!("Configuration keys (JSON, unknown keys rejected) with defaults:\n{}", out.join("\n"))
}

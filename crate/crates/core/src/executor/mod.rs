//! Closed-loop hierarchical execution.
//!
//! A plan (decoded by the planner or taken from a labeled expert episode)
//! is executed stage by stage: the policy samples a chunk, part of it is
//! applied, and the stage switches when the observation matches the goal or
//! the policy signals a stop.

pub mod eval;
pub mod policies;
pub mod rollout;

pub use eval::{evaluate, metrics_csv, metrics_table, EvalConfig, EvalPolicy, MetricsRow, ScenarioSet};
pub use policies::{ChunkPolicy, ExpertPolicy, ZeroPolicy};
pub use rollout::{
    ground_truth_steps, run_stage, run_task, Env, LogRecord, PlanSource, StageOutcome, SwitchCause, TaskResult,
};

use serde::{Deserialize, Serialize};

use crate::policy::CHUNK_LEN;
use crate::toyworld::render::RASTER_CELLS;
use crate::toyworld::Observation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Apply the chunk's per-step deltas.
    Delta,
    /// Servo linearly to the poses reached at the waypoint offsets.
    Waypoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorConfig {
    pub execute_steps: usize,
    pub waypoint_offsets: Vec<usize>,
    pub mode: ControlMode,
    /// Largest fraction of mismatched cells that still counts as aligned.
    pub align_threshold: f64,
    /// A chunk whose mean |action| is below this signals a stop.
    pub stop_threshold: f64,
    pub stage_budget: usize,
    pub use_alignment: bool,
    pub use_stop: bool,
    /// Euler steps of the flow sampler.
    pub sampler_steps: usize,
    /// Clip commanded actions to the simulator bound instead of failing.
    pub clamp_actions: bool,
    /// Re-decode the plan from the current frame before every later stage.
    pub replan: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            execute_steps: 10,
            waypoint_offsets: vec![5, 10],
            mode: ControlMode::Delta,
            align_threshold: 0.002,
            stop_threshold: 0.005,
            stage_budget: 200,
            use_alignment: true,
            use_stop: true,
            sampler_steps: 10,
            clamp_actions: true,
            replan: false,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ExecutorError> {
        let bad = |m: String| Err(ExecutorError::InvalidConfig(m));
        if self.execute_steps == 0 || self.execute_steps > CHUNK_LEN {
            return bad(format!("execute_steps {} outside 1..={CHUNK_LEN}", self.execute_steps));
        }
        let mut prev = 0;
        for &w in &self.waypoint_offsets {
            if w <= prev || w > self.execute_steps {
                return bad(format!("waypoint offsets {:?} must increase within 1..=execute_steps", self.waypoint_offsets));
            }
            prev = w;
        }
        if self.mode == ControlMode::Waypoint && self.waypoint_offsets.is_empty() {
            return bad("waypoint mode needs at least one offset".into());
        }
        if self.sampler_steps == 0 || self.stage_budget == 0 {
            return bad("sampler_steps and stage_budget must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.align_threshold) || !(self.stop_threshold >= 0.0) {
            return bad("thresholds out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecutorError {
    #[error("invalid executor configuration: {0}")]
    InvalidConfig(String),
    #[error("raster views differ: observation {0:?} vs goal {1:?}")]
    ViewMismatch(crate::toyworld::View, crate::toyworld::View),
    #[error(transparent)]
    World(#[from] crate::toyworld::WorldError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Milestone(#[from] crate::milestone::MilestoneError),
}

/// Whether the fraction of differing cells over both views is within
/// `threshold`.
pub fn aligned(obs: &Observation, goal: &Observation, threshold: f64) -> Result<bool, ExecutorError> {
    let mut diff = 0;
    for (o, g) in obs.iter().zip(goal) {
        if o.view != g.view {
            return Err(ExecutorError::ViewMismatch(o.view, g.view));
        }
        diff += o.mismatches(g);
    }
    Ok(diff as f64 / (2 * RASTER_CELLS) as f64 <= threshold)
}

//! Stage and task execution.

use serde::{Deserialize, Serialize};

use super::policies::{ActInput, ChunkPolicy};
use super::{aligned, ControlMode, ExecutorConfig, ExecutorError};
use crate::milestone::MilestonePlan;
use crate::planner::{plan_from_observation, BeamConfig, NextTokenModel, PlanStep};
use crate::policy::{ActionChunk, ACTION_DIM, CHUNK_DIM};
use crate::rng::Rng;
use crate::toyworld::state::ACTION_BOUND;
use crate::toyworld::{
    render, step, success_metrics_states, Action, Episode, Observation, ScenarioDescriptor, TaskMetrics, WorldState,
};

/// The simulated world of one rollout, with its state history.
pub struct Env {
    pub states: Vec<WorldState>,
}

impl Env {
    pub fn new(scenario: &ScenarioDescriptor) -> Result<Self, ExecutorError> {
        Ok(Env { states: vec![scenario.initial_state()?] })
    }

    pub fn state(&self) -> &WorldState {
        self.states.last().expect("non-empty history")
    }

    pub fn observe(&self) -> Observation {
        render(self.state())
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    fn apply(&mut self, delta: [f32; 4], clamp: bool) -> Result<(), ExecutorError> {
        let delta = if clamp { delta.map(|v| v.clamp(-ACTION_BOUND, ACTION_BOUND)) } else { delta };
        let action = Action::new(delta)?;
        let next = step(self.state(), &action);
        self.states.push(next);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchCause {
    Aligned,
    Stopped,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Completed,
    Stopped,
    Timeout,
    Failed(String),
}

/// One line of the rollout log: an executed action, or a stage switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: usize,
    pub stage: usize,
    /// `(x, y, z, openness)` after the action.
    pub pose: [f32; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<[f32; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_event: Option<SwitchCause>,
}

fn action_at(chunk: &ActionChunk, k: usize) -> [f32; 4] {
    let mut a = [0.0; ACTION_DIM];
    a.copy_from_slice(&chunk[k * ACTION_DIM..(k + 1) * ACTION_DIM]);
    a
}

/// Absolute poses reached after the first `w` deltas, for each offset `w`.
pub fn waypoint_targets(proprio: [f32; 4], chunk: &ActionChunk, offsets: &[usize]) -> Vec<[f32; 4]> {
    let mut pose = proprio;
    let mut done = 0;
    let mut out = Vec::with_capacity(offsets.len());
    for &w in offsets {
        for k in done..w.min(CHUNK_DIM / ACTION_DIM) {
            let a = action_at(chunk, k);
            for i in 0..ACTION_DIM {
                pose[i] += a[i];
            }
        }
        done = w;
        out.push(pose);
    }
    out
}

/// Commands for one chunk under the configured control mode.
fn commands(cfg: &ExecutorConfig, proprio: [f32; 4], chunk: &ActionChunk) -> Vec<[f32; 4]> {
    match cfg.mode {
        ControlMode::Delta => (0..cfg.execute_steps).map(|k| action_at(chunk, k)).collect(),
        ControlMode::Waypoint => {
            let targets = waypoint_targets(proprio, chunk, &cfg.waypoint_offsets);
            let mut from = proprio;
            let mut prev = 0;
            let mut out = Vec::new();
            for (&w, target) in cfg.waypoint_offsets.iter().zip(targets) {
                let n = (w - prev) as f32;
                let d = [0, 1, 2, 3].map(|i| (target[i] - from[i]) / n);
                out.extend(std::iter::repeat_n(d, w - prev));
                from = target;
                prev = w;
            }
            out
        }
    }
}

/// Mean |action| over the part of the chunk that would be executed. The
/// padded tail is excluded so that a chunk with a few real steps left
/// before its boundary is not mistaken for a stop.
pub fn stop_statistic(chunk: &ActionChunk, execute_steps: usize) -> f64 {
    let n = (execute_steps * ACTION_DIM).min(CHUNK_DIM);
    chunk[..n].iter().map(|v| v.abs() as f64).sum::<f64>() / n as f64
}

fn pose_of(s: &WorldState) -> [f32; 4] {
    s.proprio()
}

/// Runs one stage until the goal is matched, the policy stops, or the step
/// budget runs out.
pub fn run_stage(
    env: &mut Env,
    policy: &dyn ChunkPolicy,
    plan_step: &PlanStep,
    cfg: &ExecutorConfig,
    rng: &mut Rng,
    log: &mut Vec<LogRecord>,
) -> Result<StageOutcome, ExecutorError> {
    let stage = plan_step.stage_index;
    let switch = |env: &Env, log: &mut Vec<LogRecord>, cause| {
        log.push(LogRecord { t: env.steps(), stage, pose: pose_of(env.state()), action: None, switch_event: Some(cause) });
    };
    let mut used = 0;
    loop {
        let obs = env.observe();
        if cfg.use_alignment && aligned(&obs, &plan_step.goal, cfg.align_threshold)? {
            switch(env, log, SwitchCause::Aligned);
            return Ok(StageOutcome::Completed);
        }
        if used >= cfg.stage_budget {
            switch(env, log, SwitchCause::Timeout);
            return Ok(StageOutcome::Timeout);
        }
        let input = ActInput { state: env.state(), obs: &obs, step: plan_step, sampler_steps: cfg.sampler_steps };
        let chunk = policy.act(&input, rng)?;
        let mean_abs = stop_statistic(&chunk, cfg.execute_steps);
        if cfg.use_stop && mean_abs < cfg.stop_threshold {
            switch(env, log, SwitchCause::Stopped);
            return Ok(StageOutcome::Stopped);
        }
        for a in commands(cfg, env.state().proprio(), &chunk).into_iter().take(cfg.stage_budget - used) {
            if let Err(e) = env.apply(a, cfg.clamp_actions) {
                return Ok(StageOutcome::Failed(e.to_string()));
            }
            used += 1;
            log.push(LogRecord { t: env.steps(), stage, pose: pose_of(env.state()), action: Some(a), switch_event: None });
        }
    }
}

/// Where the executor gets its plan.
pub enum PlanSource<'a> {
    GroundTruth(Vec<PlanStep>),
    WorldModel { model: &'a dyn NextTokenModel, beam: BeamConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub metrics: TaskMetrics,
    pub outcomes: Vec<StageOutcome>,
    pub failure: Option<String>,
    pub steps: usize,
    pub log: Vec<LogRecord>,
}

/// Plan steps of a labeled episode, goals taken from its goal frames.
pub fn ground_truth_steps(episode: &Episode, plan: &MilestonePlan) -> Vec<PlanStep> {
    plan.segments
        .iter()
        .enumerate()
        .map(|(i, s)| PlanStep {
            stage_index: i,
            subtask: s.subtask.clone(),
            goal: [episode.rasters[s.goal_frames[0]][0].clone(), episode.rasters[s.goal_frames[1]][1].clone()],
        })
        .collect()
}

/// Executes a whole task and scores it.
pub fn run_task(
    scenario: &ScenarioDescriptor,
    source: &PlanSource<'_>,
    policy: &dyn ChunkPolicy,
    cfg: &ExecutorConfig,
    rng: &mut Rng,
) -> Result<TaskResult, ExecutorError> {
    cfg.validate()?;
    let mut env = Env::new(scenario)?;
    let instruction = scenario.instruction();
    let mut log = Vec::new();
    let mut outcomes = Vec::new();
    let mut failure = None;
    let steps = match source {
        PlanSource::GroundTruth(steps) => Ok(steps.clone()),
        PlanSource::WorldModel { model, beam } => plan_from_observation(*model, &env.observe(), &instruction, beam),
    };
    match steps {
        Err(_) => failure = Some("plan-failed".to_string()),
        Ok(steps) if steps.is_empty() => failure = Some("empty-plan".to_string()),
        Ok(steps) => {
            for (i, planned) in steps.iter().enumerate() {
                let mut current = planned.clone();
                if let (true, true, PlanSource::WorldModel { model, beam }) = (cfg.replan, i > 0, source) {
                    match plan_from_observation(*model, &env.observe(), &instruction, beam) {
                        Ok(fresh) if !fresh.is_empty() => current = fresh[0].clone(),
                        _ => {
                            failure = Some("plan-failed".to_string());
                            break;
                        }
                    }
                }
                current.stage_index = i;
                let outcome = run_stage(&mut env, policy, &current, cfg, rng, &mut log)?;
                let failed = matches!(outcome, StageOutcome::Failed(_));
                if let StageOutcome::Failed(reason) = &outcome {
                    failure = Some(reason.clone());
                }
                outcomes.push(outcome);
                if failed {
                    break;
                }
            }
        }
    }
    let metrics = success_metrics_states(&env.states, scenario.target_id)?;
    Ok(TaskResult { metrics, outcomes, failure, steps: env.steps(), log })
}

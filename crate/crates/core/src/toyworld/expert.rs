//! Scripted pick-and-place demonstrator.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::metrics::success_metrics;
use super::scenario::ScenarioDescriptor;
use super::state::{step, Action, WorldState, ACTION_BOUND};
use super::WorldError;
use crate::rng::derived_rng;

pub const PHASE_NAMES: [&str; 8] =
    ["approach", "descend", "close", "lift", "move", "lower", "open", "retreat"];

/// Largest per-axis displacement per step during free-space moves.
pub const EXPERT_SPEED: f32 = 0.04;
pub const HOVER_Z: f32 = 0.3;
pub const GRASP_Z: f32 = 0.05;
pub const PLACE_Z: f32 = 0.1;
pub const RETREAT_Z: f32 = 0.2;
/// Openness change per step whenever the gripper is actuated.
pub const GRIP_STEP: f32 = 0.0625;
/// The retreat keeps opening until the gripper is fully open.
pub const RETREAT_STEPS: usize = 6;

/// Perturbation of recorded demonstrations.
///
/// Each commanded displacement gets Gaussian noise of standard deviation
/// `noise` per axis, except on the last step of a phase. The expert steers
/// toward the phase goal from wherever it is, so the recorded actions show
/// recoveries from small deviations while every phase still ends on its
/// goal. Gripper actuation is never perturbed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub noise: f32,
    pub seed: u64,
}

/// Ground-truth phase structure of one expert episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpertTrace {
    /// `phase_frames[k]` is the frame at which phase `k` starts; the last
    /// entry is the final frame.
    pub phase_frames: [usize; 9],
    /// First frame with the gripper closed.
    pub close_frame: usize,
    /// First frame with the gripper open again.
    pub open_frame: usize,
}

impl ExpertTrace {
    /// The eight frames at which a phase ends.
    pub fn transitions(&self) -> &[usize] {
        &self.phase_frames[1..]
    }
}

struct Phase {
    goal: Option<[f32; 3]>,
    steps: Option<usize>,
    dg: f32,
}

fn travel_steps(from: [f32; 3], to: [f32; 3]) -> usize {
    let longest = (0..3).map(|i| (to[i] - from[i]).abs()).fold(0.0f32, f32::max);
    ((longest / EXPERT_SPEED).ceil() as usize).max(1)
}

/// Runs the eight-phase demonstration for a scenario.
pub fn scripted_expert(scenario: &ScenarioDescriptor) -> Result<(Episode, ExpertTrace), WorldError> {
    scripted_expert_with(scenario, &ExpertConfig::default())
}

pub fn scripted_expert_with(
    scenario: &ScenarioDescriptor,
    cfg: &ExpertConfig,
) -> Result<(Episode, ExpertTrace), WorldError> {
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(WorldError::InvalidScenario(format!("expert noise {} must be finite and non-negative", cfg.noise)));
    }
    let normal = Normal::new(0.0f32, cfg.noise).expect("checked above");
    let mut rng = derived_rng(cfg.seed, &[scenario.seed, scenario.id as u64]);
    let initial = scenario.initial_state()?;
    let target = *scenario.target().expect("validated scenario has a target");
    let [tx, ty] = target.center;
    let [px, py] = scenario.plate_center;
    let phases = [
        Phase { goal: Some([tx, ty, HOVER_Z]), steps: None, dg: 0.0 },
        Phase { goal: Some([tx, ty, GRASP_Z]), steps: Some(7), dg: -GRIP_STEP },
        Phase { goal: None, steps: Some(2), dg: -GRIP_STEP },
        Phase { goal: Some([tx, ty, HOVER_Z]), steps: Some(7), dg: -GRIP_STEP },
        Phase { goal: Some([px, py, HOVER_Z]), steps: None, dg: 0.0 },
        Phase { goal: Some([px, py, PLACE_Z]), steps: Some(6), dg: GRIP_STEP },
        Phase { goal: None, steps: Some(2), dg: GRIP_STEP },
        Phase { goal: Some([px, py, RETREAT_Z]), steps: Some(RETREAT_STEPS), dg: GRIP_STEP },
    ];

    let mut states = vec![initial];
    let mut actions = Vec::new();
    let mut phase_frames = [0usize; 9];
    for (k, phase) in phases.iter().enumerate() {
        let start: &WorldState = states.last().expect("non-empty");
        let n = match (phase.steps, phase.goal) {
            (Some(n), _) => n,
            (None, Some(goal)) => travel_steps(start.gripper_pose, goal),
            (None, None) => unreachable!("every phase has a length or a goal"),
        };
        for j in 0..n {
            let cur = states.last().expect("non-empty");
            let remaining = (n - j) as f32;
            let mut delta = [0.0f32, 0.0, 0.0, phase.dg];
            if let Some(goal) = phase.goal {
                for axis in 0..3 {
                    delta[axis] = (goal[axis] - cur.gripper_pose[axis]) / remaining;
                    if cfg.noise > 0.0 && j + 1 < n {
                        delta[axis] = (delta[axis] + normal.sample(&mut rng)).clamp(-ACTION_BOUND, ACTION_BOUND);
                    }
                }
            }
            let action = Action::new(delta)?;
            let next = step(cur, &action);
            actions.push(action);
            states.push(next);
        }
        phase_frames[k + 1] = states.len() - 1;
    }

    let episode = Episode::record(scenario.clone(), states, actions)?;
    let trace = ExpertTrace {
        phase_frames,
        close_frame: phase_frames[3],
        open_frame: phase_frames[7],
    };
    let m = success_metrics(&episode, scenario.target_id)?;
    if !(m.approach && m.success) {
        return Err(WorldError::InvalidScenario(format!(
            "expert failed scenario {} (approach={}, success={})",
            scenario.id, m.approach, m.success
        )));
    }
    Ok((episode, trace))
}

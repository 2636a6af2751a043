//! Approach and execution success.

use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::state::{is_open, planar_distance, WorldState};
use super::WorldError;

/// Planar gripper-to-target distance that counts as reaching the target.
pub const APPROACH_DISTANCE: f32 = 0.08;
/// The gripper must also be at or below this height.
pub const APPROACH_MAX_Z: f32 = 0.3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub approach: bool,
    pub success: bool,
}

pub fn success_metrics(episode: &Episode, target_id: u32) -> Result<TaskMetrics, WorldError> {
    success_metrics_states(&episode.states, target_id)
}

pub fn success_metrics_states(states: &[WorldState], target_id: u32) -> Result<TaskMetrics, WorldError> {
    let last = states
        .last()
        .ok_or_else(|| WorldError::InvalidEpisode("no states".into()))?;
    let target_at = |s: &WorldState| s.object(target_id).map(|o| o.center).ok_or(WorldError::UnknownObject(target_id));
    let mut approach = false;
    for s in states {
        let c = target_at(s)?;
        if planar_distance(s.gripper_xy(), c) <= APPROACH_DISTANCE && s.gripper_pose[2] <= APPROACH_MAX_Z {
            approach = true;
        }
    }
    let final_center = target_at(last)?;
    let on_plate = last.plate.is_some_and(|p| p.contains(final_center));
    Ok(TaskMetrics { approach, success: on_plate && is_open(last.gripper_open) })
}

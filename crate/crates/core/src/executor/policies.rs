//! Chunk policies the executor can drive.

use super::ExecutorError;
use crate::milestone::MilestonePlan;
use crate::planner::PlanStep;
use crate::policy::dataset::raw_chunk;
use crate::policy::{pad_chunk, sample_chunk, ActionChunk, Conditioning, FlowPolicy, CHUNK_DIM};
use crate::rng::Rng;
use crate::toyworld::{Episode, Observation, WorldState};

/// What a policy sees at one control step.
pub struct ActInput<'a> {
    pub state: &'a WorldState,
    pub obs: &'a Observation,
    pub step: &'a PlanStep,
    pub sampler_steps: usize,
}

/// Maps the current situation to a chunk in action units.
pub trait ChunkPolicy: Sync {
    fn act(&self, input: &ActInput<'_>, rng: &mut Rng) -> Result<ActionChunk, ExecutorError>;
}

impl ChunkPolicy for FlowPolicy<f32> {
    fn act(&self, input: &ActInput<'_>, rng: &mut Rng) -> Result<ActionChunk, ExecutorError> {
        let cond = Conditioning::new(input.obs, &input.step.goal, &input.step.subtask, input.state.proprio());
        let mut chunk = sample_chunk(self, &cond, input.sampler_steps, rng)?;
        for v in chunk.iter_mut() {
            *v *= self.action_scale;
        }
        Ok(chunk)
    }
}

/// Always returns the zero chunk.
pub struct ZeroPolicy;

impl ChunkPolicy for ZeroPolicy {
    fn act(&self, _: &ActInput<'_>, _: &mut Rng) -> Result<ActionChunk, ExecutorError> {
        Ok([0.0; CHUNK_DIM])
    }
}

/// Replays a recorded expert episode: finds the recorded frame matching
/// the current state and returns the following actions, padded at the
/// active stage's boundary. Off the recorded trajectory it returns zeros.
pub struct ExpertPolicy {
    pub episode: Episode,
    pub plan: MilestonePlan,
}

fn same_situation(a: &WorldState, b: &WorldState) -> bool {
    a.gripper_pose == b.gripper_pose && a.gripper_open == b.gripper_open && a.objects == b.objects
}

impl ChunkPolicy for ExpertPolicy {
    fn act(&self, input: &ActInput<'_>, _: &mut Rng) -> Result<ActionChunk, ExecutorError> {
        let Some(t) = self.episode.states.iter().position(|s| same_situation(s, input.state)) else {
            return Ok([0.0; CHUNK_DIM]);
        };
        let boundary = self.plan.segments.get(input.step.stage_index).map_or(self.episode.last_frame(), |s| s.to);
        if t > boundary {
            return Ok([0.0; CHUNK_DIM]);
        }
        Ok(pad_chunk(&raw_chunk(&self.episode, t), t, boundary)?)
    }
}

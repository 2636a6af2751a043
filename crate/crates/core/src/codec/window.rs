//! Sliding-window selection of training contexts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::milestone::MilestonePlan;
use crate::rng::Rng;
use crate::toyworld::state::CONTROL_HZ;

/// Half-width, in frames, of the window around a goal frame (one second).
pub const WINDOW_RADIUS: usize = CONTROL_HZ;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start_frame: usize,
    pub start_stage: usize,
}

/// Picks a goal frame uniformly among the plan's segments, then a start frame
/// uniformly within `radius` frames of it (clipped to the episode), and
/// returns the stage containing that start frame.
pub fn sample_window_with_radius(plan: &MilestonePlan, episode_len: usize, radius: usize, rng: &mut Rng) -> Window {
    let i = rng.random_range(0..plan.len());
    let goal = plan.segments[i].goal_frames[0];
    let lo = goal.saturating_sub(radius);
    let hi = (goal + radius).min(episode_len - 1);
    let start_frame = rng.random_range(lo..=hi);
    Window { start_frame, start_stage: plan.stage_of(start_frame) }
}

pub fn sample_window(plan: &MilestonePlan, episode_len: usize, rng: &mut Rng) -> Window {
    sample_window_with_radius(plan, episode_len, WINDOW_RADIUS, rng)
}

/// The episode-start window followed by `samples` random windows, each
/// assembled into a training sequence.
pub fn pack_episode(
    episode: &crate::toyworld::Episode,
    plan: &MilestonePlan,
    samples: usize,
    rng: &mut Rng,
) -> Result<Vec<(Window, super::TokenSequence)>, super::CodecError> {
    let mut windows = vec![Window { start_frame: 0, start_stage: 0 }];
    windows.extend((0..samples).map(|_| sample_window(plan, episode.len(), rng)));
    windows
        .into_iter()
        .map(|w| Ok((w, super::assemble(episode, plan, w.start_frame, w.start_stage)?)))
        .collect()
}

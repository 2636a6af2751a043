//! Candidate milestone boundaries from motion corners and gripper events.

use super::rdp::rdp_simplify;
use super::MilestoneError;
use crate::toyworld::state::GRIPPER_THRESHOLD;
use crate::toyworld::Episode;

pub const DEFAULT_EPSILON: f64 = 0.02;
/// Candidates closer than this many frames collapse onto the later one.
pub const MERGE_WINDOW: usize = 3;

fn closed(v: f32) -> bool {
    v < GRIPPER_THRESHOLD
}

/// Frames whose open/closed side differs from the previous frame's.
pub fn gripper_transitions(openness: &[f32]) -> Vec<usize> {
    (1..openness.len())
        .filter(|&t| closed(openness[t]) != closed(openness[t - 1]))
        .collect()
}

/// Collapses sorted candidates that lie within `window` frames of the last
/// kept one onto the later index. Frame 0 and `last` are never moved.
pub fn merge_close(sorted: &[usize], last: usize, window: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(sorted.len());
    for &x in sorted {
        match out.last_mut() {
            None => out.push(x),
            Some(prev) if x - *prev < window => {
                if *prev == 0 {
                    if x == last {
                        out.push(x);
                    }
                } else {
                    *prev = x;
                }
            }
            Some(_) => out.push(x),
        }
    }
    out
}

pub fn candidate_boundaries(episode: &Episode, epsilon: f64) -> Result<Vec<usize>, MilestoneError> {
    candidate_boundaries_with_window(episode, epsilon, MERGE_WINDOW)
}

pub fn candidate_boundaries_with_window(
    episode: &Episode,
    epsilon: f64,
    window: usize,
) -> Result<Vec<usize>, MilestoneError> {
    if episode.len() < 2 {
        return Err(MilestoneError::TooFewPoints(episode.len()));
    }
    let poses: Vec<[f64; 3]> = episode
        .poses()
        .iter()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let mut all = rdp_simplify(&poses, epsilon)?;
    all.extend(gripper_transitions(&episode.openness()));
    all.push(0);
    all.push(episode.last_frame());
    all.sort_unstable();
    all.dedup();
    Ok(merge_close(&all, episode.last_frame(), window.max(1)))
}

//! Stop padding and goal-offset augmentation.

use rand::Rng as _;

use super::{ActionChunk, PolicyError, ACTION_DIM, CHUNK_DIM};
use crate::milestone::MilestonePlan;
use crate::rng::Rng;

/// Half-width of the goal overlap window, in frames.
pub const OVERLAP_WINDOW: usize = 5;

/// Zeroes every action at chunk offset `>= boundary − t`.
pub fn pad_chunk(raw: &ActionChunk, t: usize, boundary: usize) -> Result<ActionChunk, PolicyError> {
    if t > boundary {
        return Err(PolicyError::PastBoundary { t, boundary });
    }
    let keep = ((boundary - t) * ACTION_DIM).min(CHUNK_DIM);
    let mut out = *raw;
    out[keep..].fill(0.0);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GoalChoice {
    /// Frames whose head and wrist rasters form the goal.
    pub goal_frames: [usize; 2],
    /// Stage the sample is labeled with after augmentation.
    pub stage: usize,
}

impl GoalChoice {
    pub fn relabeled(&self, stage: usize) -> bool {
        self.stage != stage
    }
}

/// Picks the goal for a sample at frame `t` of `stage`.
///
/// Within `window` frames of the stage boundary the goal is the stage's own
/// or the next stage's with equal odds, the latter relabeling the sample.
/// Elsewhere (and on the last stage) the goal frame is the boundary moved by
/// a uniform offset in `[−window, window]`, clamped into the stage.
pub fn offset_goal(
    t: usize,
    stage: usize,
    plan: &MilestonePlan,
    window: usize,
    rng: &mut Rng,
) -> Result<GoalChoice, PolicyError> {
    let seg = plan
        .segments
        .get(stage)
        .ok_or_else(|| PolicyError::InvalidPlan(format!("stage {stage} of a {}-stage plan", plan.len())))?;
    let boundary = seg.to;
    if t.abs_diff(boundary) <= window && stage + 1 < plan.len() {
        return Ok(if rng.random_bool(0.5) {
            GoalChoice { goal_frames: plan.segments[stage + 1].goal_frames, stage: stage + 1 }
        } else {
            GoalChoice { goal_frames: seg.goal_frames, stage }
        });
    }
    let w = window as i64;
    let delta = rng.random_range(-w..=w);
    let frame = (boundary as i64 + delta).clamp(seg.from as i64, seg.to as i64) as usize;
    Ok(GoalChoice { goal_frames: [frame, frame], stage })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_zeroes_the_tail_from_the_boundary() {
        let raw = [1.0f32; CHUNK_DIM];
        let p = pad_chunk(&raw, 8, 20).unwrap();
        assert!(p[..48].iter().all(|&v| v == 1.0));
        assert!(p[48..].iter().all(|&v| v.to_bits() == 0));
        assert_eq!(pad_chunk(&raw, 0, 30).unwrap(), raw);
        assert!(pad_chunk(&raw, 5, 5).unwrap().iter().all(|&v| v.to_bits() == 0));
        assert!(matches!(pad_chunk(&raw, 6, 5), Err(PolicyError::PastBoundary { .. })));
    }
}

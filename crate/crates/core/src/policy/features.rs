//! Policy conditioning: raster features, subtask tokens and proprioception.

use crate::codec::tokenize_text;
use crate::toyworld::render::{CODE_GRIPPER_CLOSED, CODE_GRIPPER_OPEN, CODE_PLATE, PALETTE_SLOTS, RASTER_CELLS, RASTER_SIDE};
use crate::toyworld::state::{FIRST_OBJECT_CODE, LAST_OBJECT_CODE};
use crate::toyworld::Observation;

/// Cells in the head and wrist views together.
pub const PAIR_CELLS: usize = 2 * RASTER_CELLS;
/// Keypoint channels per view: open marker, closed marker, plate, objects.
const KEYPOINT_CHANNELS: usize = 4;
/// `(mass, x, y)` per keypoint channel and view.
pub const KEYPOINT_WIDTH: usize = 2 * KEYPOINT_CHANNELS * 3;
/// Features of both views of one observation.
pub const OBS_WIDTH: usize = PAIR_CELLS + KEYPOINT_WIDTH;
/// Observation, goal, mean subtask embedding (32) and proprioception (4).
pub const COND_WIDTH: usize = 2 * OBS_WIDTH + 32 + 4;

/// Each cell as `code / 63` (head view first, row-major), followed by
/// keypoints: for each view and channel, the fraction of cells it covers
/// and the mean cell centre in view coordinates (zeros when absent).
pub fn raster_features(obs: &Observation) -> Vec<f32> {
    cells_features(obs.iter().flat_map(|r| r.cells.iter().copied()))
}

fn keypoint_channel(code: u8) -> Option<usize> {
    match code {
        CODE_GRIPPER_OPEN => Some(0),
        CODE_GRIPPER_CLOSED => Some(1),
        CODE_PLATE => Some(2),
        FIRST_OBJECT_CODE..=LAST_OBJECT_CODE => Some(3),
        _ => None,
    }
}

pub(crate) fn cells_features(cells: impl Iterator<Item = u8>) -> Vec<f32> {
    let scale = (PALETTE_SLOTS - 1) as f32;
    let mut out = Vec::with_capacity(OBS_WIDTH);
    let mut sums = [[0.0f32; 3]; 2 * KEYPOINT_CHANNELS];
    for (i, c) in cells.take(PAIR_CELLS).enumerate() {
        out.push(c as f32 / scale);
        if let Some(k) = keypoint_channel(c) {
            let (view, cell) = (i / RASTER_CELLS, i % RASTER_CELLS);
            let acc = &mut sums[view * KEYPOINT_CHANNELS + k];
            acc[0] += 1.0;
            acc[1] += ((cell % RASTER_SIDE) as f32 + 0.5) / RASTER_SIDE as f32;
            acc[2] += ((cell / RASTER_SIDE) as f32 + 0.5) / RASTER_SIDE as f32;
        }
    }
    for [n, x, y] in sums {
        if n > 0.0 {
            out.extend([n / RASTER_CELLS as f32, x / n, y / n]);
        } else {
            out.extend([0.0; 3]);
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conditioning {
    pub obs: Vec<f32>,
    pub goal: Vec<f32>,
    /// Tokens of the stage's subtask text; embedded and averaged by the
    /// policy.
    pub subtask: Vec<u32>,
    /// `(x, y, z, openness)`.
    pub proprio: [f32; 4],
}

impl Conditioning {
    pub fn new(obs: &Observation, goal: &Observation, subtask: &str, proprio: [f32; 4]) -> Self {
        Conditioning {
            obs: raster_features(obs),
            goal: raster_features(goal),
            subtask: tokenize_text(subtask),
            proprio,
        }
    }
}

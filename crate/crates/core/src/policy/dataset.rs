//! Per-frame training samples and their cache file.
//!
//! Cache layout, little-endian: magic `VSTP`, version `u16`, record count
//! `u32`, record width `u32` (in floats), then fixed-width `f32` records:
//! episode, frame, stage, observation cells (512 palette codes), goal cells
//! (512), proprioception (4), chunk (120, action units), subtask token count
//! and the subtask tokens padded with zeros to 32 slots.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{offset_goal, pad_chunk, OVERLAP_WINDOW};
use super::features::{cells_features, Conditioning, PAIR_CELLS};
use super::{ActionChunk, PolicyError, ACTION_DIM, CHUNK_DIM, CHUNK_LEN};
use crate::codec::tokenize_text;
use crate::milestone::MilestonePlan;
use crate::rng::derived_rng;
use crate::toyworld::{Episode, Observation};

pub const MAGIC: &[u8; 4] = b"VSTP";
pub const VERSION: u16 = 1;
/// Subtask token slots per cached record.
pub const MAX_SUBTASK_TOKENS: usize = 32;
const RECORD_WIDTH: usize = 3 + 2 * PAIR_CELLS + 4 + CHUNK_DIM + 1 + MAX_SUBTASK_TOKENS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Goal overlap window in frames.
    pub window: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { window: OVERLAP_WINDOW, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    pub episode: u32,
    pub frame: u32,
    /// Stage after goal augmentation.
    pub stage: u32,
    /// Head then wrist palette codes.
    pub obs: Vec<u8>,
    pub goal: Vec<u8>,
    pub proprio: [f32; 4],
    /// Target chunk in action units, padded at the stage boundary.
    pub chunk: ActionChunk,
    pub subtask: Vec<u32>,
}

impl PolicySample {
    pub fn conditioning(&self) -> Conditioning {
        Conditioning {
            obs: cells_features(self.obs.iter().copied()),
            goal: cells_features(self.goal.iter().copied()),
            subtask: self.subtask.clone(),
            proprio: self.proprio,
        }
    }
}

fn cells(obs: &Observation) -> Vec<u8> {
    obs.iter().flat_map(|r| r.cells.iter().copied()).collect()
}

/// Next `CHUNK_LEN` recorded actions from frame `t`, zero past the end.
pub fn raw_chunk(episode: &Episode, t: usize) -> ActionChunk {
    let mut out = [0.0; CHUNK_DIM];
    for (k, a) in episode.actions.iter().skip(t).take(CHUNK_LEN).enumerate() {
        out[k * ACTION_DIM..(k + 1) * ACTION_DIM].copy_from_slice(&a.delta());
    }
    out
}

/// Stage whose range `(from, to]` holds `t`; frame 0 opens stage 0. A
/// boundary frame is thereby the last frame of the stage it completes, and
/// with its own goal it carries the all-zero stop chunk.
pub fn closing_stage(plan: &MilestonePlan, t: usize) -> usize {
    plan.segments.iter().position(|s| t <= s.to).unwrap_or(plan.len().saturating_sub(1))
}

fn episode_samples(
    index: usize,
    episode: &Episode,
    plan: &MilestonePlan,
    cfg: &DatasetConfig,
) -> Result<Vec<PolicySample>, PolicyError> {
    plan.validate(episode.len()).map_err(|e| PolicyError::InvalidPlan(e.to_string()))?;
    let mut rng = derived_rng(cfg.seed, &[index as u64]);
    let mut out = Vec::with_capacity(episode.len());
    for t in 0..episode.len() {
        let choice = offset_goal(t, closing_stage(plan, t), plan, cfg.window, &mut rng)?;
        let seg = &plan.segments[choice.stage];
        let chunk = pad_chunk(&raw_chunk(episode, t), t, seg.to)?;
        let goal = [
            episode.rasters[choice.goal_frames[0]][0].clone(),
            episode.rasters[choice.goal_frames[1]][1].clone(),
        ];
        out.push(PolicySample {
            episode: index as u32,
            frame: t as u32,
            stage: choice.stage as u32,
            obs: cells(&episode.rasters[t]),
            goal: cells(&goal),
            proprio: episode.states[t].proprio(),
            chunk,
            subtask: tokenize_text(&seg.subtask),
        });
    }
    Ok(out)
}

/// One sample per frame of every episode, in episode order.
pub fn build_dataset(episodes: &[(Episode, MilestonePlan)], cfg: &DatasetConfig) -> Result<Vec<PolicySample>, PolicyError> {
    let parts: Vec<Result<Vec<PolicySample>, PolicyError>> = episodes
        .par_iter()
        .enumerate()
        .map(|(i, (ep, plan))| episode_samples(i, ep, plan, cfg))
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn encode_dataset(samples: &[PolicySample]) -> Result<Vec<u8>, PolicyError> {
    let mut out = Vec::with_capacity(14 + samples.len() * RECORD_WIDTH * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&(RECORD_WIDTH as u32).to_le_bytes());
    for s in samples {
        if s.subtask.len() > MAX_SUBTASK_TOKENS {
            return Err(PolicyError::Dataset(format!(
                "subtask of {} tokens exceeds {MAX_SUBTASK_TOKENS} slots",
                s.subtask.len()
            )));
        }
        let mut rec: Vec<f32> = Vec::with_capacity(RECORD_WIDTH);
        rec.extend([s.episode as f32, s.frame as f32, s.stage as f32]);
        rec.extend(s.obs.iter().map(|&c| c as f32));
        rec.extend(s.goal.iter().map(|&c| c as f32));
        rec.extend(s.proprio);
        rec.extend(s.chunk);
        rec.push(s.subtask.len() as f32);
        rec.extend(s.subtask.iter().map(|&t| t as f32));
        rec.resize(RECORD_WIDTH, 0.0);
        for v in rec {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<PolicySample>, PolicyError> {
    if bytes.len() < 14 || &bytes[..4] != MAGIC {
        return Err(PolicyError::Dataset("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(PolicyError::Dataset(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    if width != RECORD_WIDTH {
        return Err(PolicyError::Dataset(format!("record width {width}, expected {RECORD_WIDTH}")));
    }
    let body = &bytes[14..];
    if body.len() != count * width * 4 {
        return Err(PolicyError::Dataset(format!(
            "expected {} bytes of records, found {}",
            count * width * 4,
            body.len()
        )));
    }
    let floats: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    floats
        .chunks_exact(width)
        .map(|r| {
            let code = |v: f32| -> Result<u8, PolicyError> {
                if (0.0..64.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(PolicyError::Dataset(format!("bad palette code {v}")))
                }
            };
            let mut at = 3;
            let obs = r[at..at + PAIR_CELLS].iter().map(|&v| code(v)).collect::<Result<Vec<_>, _>>()?;
            at += PAIR_CELLS;
            let goal = r[at..at + PAIR_CELLS].iter().map(|&v| code(v)).collect::<Result<Vec<_>, _>>()?;
            at += PAIR_CELLS;
            let proprio = [r[at], r[at + 1], r[at + 2], r[at + 3]];
            at += 4;
            let mut chunk = [0.0; CHUNK_DIM];
            chunk.copy_from_slice(&r[at..at + CHUNK_DIM]);
            at += CHUNK_DIM;
            let n = r[at] as usize;
            if n > MAX_SUBTASK_TOKENS {
                return Err(PolicyError::Dataset(format!("subtask length {n}")));
            }
            let subtask = r[at + 1..at + 1 + n].iter().map(|&v| v as u32).collect();
            Ok(PolicySample {
                episode: r[0] as u32,
                frame: r[1] as u32,
                stage: r[2] as u32,
                obs,
                goal,
                proprio,
                chunk,
                subtask,
            })
        })
        .collect()
}

pub fn write_dataset(path: &Path, samples: &[PolicySample]) -> Result<(), PolicyError> {
    std::fs::write(path, encode_dataset(samples)?).map_err(|e| PolicyError::Dataset(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> Result<Vec<PolicySample>, PolicyError> {
    let bytes = std::fs::read(path).map_err(|e| PolicyError::Dataset(format!("{}: {e}", path.display())))?;
    decode_dataset(&bytes)
}

//! Goal-conditioned action-chunk policy trained by flow matching.
//!
//! The policy sees the current rasters, the goal rasters of the active
//! stage, the stage's subtask text and the gripper state, and predicts a
//! chunk of 30 future actions. Training targets are zero-padded past the
//! stage boundary so the policy learns to stop, and goal frames are jittered
//! around the boundary.

pub mod augment;
pub mod dataset;
pub mod features;
pub mod flow;
pub mod net;
pub mod train;

pub use augment::{offset_goal, pad_chunk, GoalChoice};
pub use dataset::{build_dataset, read_dataset, write_dataset, DatasetConfig, PolicySample};
pub use features::{raster_features, Conditioning, COND_WIDTH, KEYPOINT_WIDTH, OBS_WIDTH, PAIR_CELLS};
pub use flow::{flow_loss, make_flow_sample, sample_chunk, FlowSample, VelocityField};
pub use net::{FlowPolicy, LossWeighting, PolicyConfig};
pub use train::{train_on_batches, train_policy, PolicyTrainConfig, PolicyTrainReport};

use crate::checkpoint::CheckpointError;
use crate::toyworld::WorldError;

/// Actions per chunk.
pub const CHUNK_LEN: usize = 30;
/// Components per action: (dx, dy, dz, dg).
pub const ACTION_DIM: usize = 4;
pub const CHUNK_DIM: usize = CHUNK_LEN * ACTION_DIM;

/// Row-major `CHUNK_LEN × ACTION_DIM` block of actions.
pub type ActionChunk = [f32; CHUNK_DIM];

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("frame {t} lies past the stage boundary {boundary}")]
    PastBoundary { t: usize, boundary: usize },
    #[error("non-finite value in chunk entry {index}")]
    NonFiniteInput { index: usize },
    #[error("non-finite loss at sample {index}")]
    NonFiniteLoss { index: usize },
    #[error("non-finite parameters after step {step}")]
    NonFiniteParameters { step: usize },
    #[error("non-finite sampler state at Euler step {step}")]
    NonFiniteSample { step: usize },
    #[error("training diverged at step {step}: loss {loss} stayed above 10x the initial {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("malformed dataset file: {0}")]
    Dataset(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

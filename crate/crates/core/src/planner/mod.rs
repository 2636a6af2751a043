//! Autoregressive planner over interleaved subtask/goal-image sequences.
//!
//! A [`NextTokenModel`] scores histories; [`beam_search`] decodes a plan
//! under the sequence grammar and [`decode_plan`] turns the decoded stages
//! back into subtask texts and goal rasters.

pub mod beam;
pub mod context_mlp;
pub mod count;
pub mod decode;
pub mod grammar;
pub mod model;

pub use beam::{beam_search, beam_search_with, BeamConfig, Constraint, Hypothesis};
pub use context_mlp::{train_context_mlp, ContextMlp, MlpConfig, TrainConfig, TrainReport};
pub use count::CountModel;
pub use decode::{decode_plan, plan_from_observation, PlanStep};
pub use grammar::{grammar_mask, GrammarState};
pub use model::{ce_loss, sequence_nll, top1_accuracy, NextTokenModel, UniformModel};

use crate::checkpoint::CheckpointError;
use crate::codec::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("zero probability for token {token} at supervised position {position}")]
    ZeroProbability { position: usize, token: u32 },
    #[error("token {0} is outside the vocabulary")]
    TokenOutOfRange(u32),
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("invalid prefix at position {position}: {message}")]
    Grammar { position: usize, message: String },
    #[error("no candidate finished within {max_new_tokens} new tokens (best unfinished score {score})")]
    Unfinished { max_new_tokens: usize, best: Vec<u32>, score: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

//! Automatic milestone labeling: motion corners and gripper events propose
//! boundaries, rules assign skills, and an annotator turns merged segments
//! into subtask texts.

pub mod boundaries;
pub mod plan;
pub mod rdp;
pub mod remote;
pub mod skills;

pub use boundaries::{candidate_boundaries, gripper_transitions, DEFAULT_EPSILON, MERGE_WINDOW};
pub use plan::{
    consolidate, merge_and_describe, AnnotatedSegment, Annotator, MilestonePlan, RuleAnnotator, Segment,
    MAX_SEGMENTS,
};
pub use rdp::rdp_simplify;
pub use remote::{RemoteAnnotator, RemoteConfig};
pub use skills::{assign_skills, LabeledSegment, SkillLibrary};

use serde::{Deserialize, Serialize};

use crate::toyworld::Episode;

#[derive(Debug, thiserror::Error)]
pub enum MilestoneError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("epsilon must be a non-negative number, got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid skill library: {0}")]
    InvalidLibrary(String),
    #[error("unknown skill id {0}")]
    UnknownSkill(usize),
    #[error("invalid segments: {0}")]
    InvalidSegments(String),
    #[error("remote annotator: {0}")]
    Remote(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub epsilon: f64,
    pub merge_window: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { epsilon: DEFAULT_EPSILON, merge_window: MERGE_WINDOW }
    }
}

/// Runs the full labeling pipeline on one episode.
pub fn label_episode(
    episode: &Episode,
    config: &LabelConfig,
    library: &SkillLibrary,
    annotator: &dyn Annotator,
) -> Result<MilestonePlan, MilestoneError> {
    let bounds = boundaries::candidate_boundaries_with_window(episode, config.epsilon, config.merge_window)?;
    let labeled = assign_skills(episode, &bounds, library)?;
    merge_and_describe(episode, &labeled, annotator, library)
}

//! Stage blocks of a decoded sequence back to subtask texts and goal rasters.

use super::PlannerError;
use crate::codec::{detokenize_text, parse, TokenSequence};
use crate::toyworld::Observation;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub stage_index: usize,
    pub subtask: String,
    /// Head and wrist goal rasters.
    pub goal: Observation,
}

/// One step per stage block, numbered from `start_stage`.
pub fn decode_plan(sequence: &TokenSequence, start_stage: usize) -> Result<Vec<PlanStep>, PlannerError> {
    let parsed = parse(sequence.tokens())?;
    parsed
        .stages
        .into_iter()
        .enumerate()
        .map(|(i, (text, goal))| {
            Ok(PlanStep { stage_index: start_stage + i, subtask: detokenize_text(&text)?, goal })
        })
        .collect()
}

/// Beam-decodes a full plan from an observation and instruction.
pub fn plan_from_observation(
    model: &dyn super::NextTokenModel,
    obs: &Observation,
    instruction: &str,
    beam: &super::BeamConfig,
) -> Result<Vec<PlanStep>, PlannerError> {
    let prefix = crate::codec::context_tokens(obs, instruction);
    let best = super::beam_search(model, &prefix, beam)?;
    decode_plan(&TokenSequence::new(best.tokens)?, 0)
}

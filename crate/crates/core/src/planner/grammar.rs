//! Incremental recognizer for the sequence grammar.
//!
//! Besides structure, the recognizer tracks the token and stage budgets: a
//! token is allowed only if some valid completion still fits, so the mask
//! is exactly the set of tokens that extend to a valid sequence.

use super::PlannerError;
use crate::codec::sequence::{is_palette_image, IMAGE_SPAN, MAX_STAGES, MAX_TOKENS};
use crate::codec::vocab::*;
use crate::toyworld::render::{View, RASTER_CELLS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    ExpectBos,
    ExpectBoi { view: View, in_stage: bool },
    Image { view: View, in_stage: bool, filled: usize },
    ExpectInstruction,
    Text { in_stage: bool },
    ExpectStageEnd,
    ExpectStageOrEnd,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrammarState {
    phase: Phase,
    len: usize,
    stages: usize,
}

impl Default for GrammarState {
    fn default() -> Self {
        GrammarState { phase: Phase::ExpectBos, len: 0, stages: 0 }
    }
}

impl GrammarState {
    /// Runs the recognizer over a prefix.
    pub fn from_prefix(prefix: &[u32]) -> Result<Self, PlannerError> {
        let mut s = GrammarState::default();
        for &t in prefix {
            s = s.advance(t)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Completed stage blocks so far.
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Fewest tokens that complete a valid sequence from this state.
    fn min_completion(&self) -> usize {
        // Tokens after a closed image span: the wrist image if the head one
        // just closed, then the rest of the enclosing block.
        let after_image = |view: View, in_stage: bool| {
            let wrist = if view == View::Head { IMAGE_SPAN } else { 0 };
            let tail = if in_stage { 2 } else { 3 };
            wrist + tail
        };
        match self.phase {
            Phase::ExpectBos => 1 + 2 * IMAGE_SPAN + 3,
            Phase::ExpectBoi { view, in_stage } => IMAGE_SPAN + after_image(view, in_stage),
            Phase::Image { view, in_stage, filled } => RASTER_CELLS - filled + 1 + after_image(view, in_stage),
            Phase::ExpectInstruction => 3,
            Phase::Text { in_stage: false } => 2,
            Phase::Text { in_stage: true } => 1 + 2 * IMAGE_SPAN + 2,
            Phase::ExpectStageEnd => 2,
            Phase::ExpectStageOrEnd => 1,
            Phase::Done => 0,
        }
    }

    /// Structural successor, ignoring the token budget.
    fn step(&self, t: u32) -> Option<GrammarState> {
        let phase = match self.phase {
            Phase::ExpectBos if t == BOS => Phase::ExpectBoi { view: View::Head, in_stage: false },
            Phase::ExpectBoi { view: View::Head, in_stage } if t == BOI_HEAD => {
                Phase::Image { view: View::Head, in_stage, filled: 0 }
            }
            Phase::ExpectBoi { view: View::Wrist, in_stage } if t == BOI_WRIST => {
                Phase::Image { view: View::Wrist, in_stage, filled: 0 }
            }
            Phase::Image { view, in_stage, filled } if filled < RASTER_CELLS && is_palette_image(t) => {
                Phase::Image { view, in_stage, filled: filled + 1 }
            }
            Phase::Image { view, in_stage, filled } if filled == RASTER_CELLS && t == EOI => match (view, in_stage) {
                (View::Head, _) => Phase::ExpectBoi { view: View::Wrist, in_stage },
                (View::Wrist, false) => Phase::ExpectInstruction,
                (View::Wrist, true) => Phase::ExpectStageEnd,
            },
            Phase::ExpectInstruction if t == BOT => Phase::Text { in_stage: false },
            Phase::Text { in_stage } if t == EOT => {
                if in_stage {
                    Phase::ExpectBoi { view: View::Head, in_stage: true }
                } else {
                    Phase::ExpectStageOrEnd
                }
            }
            Phase::Text { in_stage } if is_text(t) => Phase::Text { in_stage },
            Phase::ExpectStageEnd if t == STAGE_END => {
                return Some(GrammarState { phase: Phase::ExpectStageOrEnd, len: self.len + 1, stages: self.stages + 1 })
            }
            Phase::ExpectStageOrEnd if t == SEQ_END => Phase::Done,
            Phase::ExpectStageOrEnd if t == BOT && self.stages < MAX_STAGES => Phase::Text { in_stage: true },
            _ => return None,
        };
        Some(GrammarState { phase, len: self.len + 1, stages: self.stages })
    }

    /// Successor state if `t` keeps a valid completion within budget.
    pub fn accept(&self, t: u32) -> Option<GrammarState> {
        self.step(t).filter(|next| next.len + next.min_completion() <= MAX_TOKENS)
    }

    pub fn allows(&self, t: u32) -> bool {
        self.accept(t).is_some()
    }

    pub fn advance(&self, t: u32) -> Result<GrammarState, PlannerError> {
        self.accept(t).ok_or_else(|| PlannerError::Grammar {
            position: self.len,
            message: format!("token {t} cannot extend the prefix"),
        })
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..VOCAB_SIZE).map(|t| self.allows(t)).collect()
    }
}

/// Allowed next tokens after `history`.
pub fn grammar_mask(history: &[u32]) -> Result<Vec<bool>, PlannerError> {
    Ok(GrammarState::from_prefix(history)?.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn allowed(history: &[u32]) -> Vec<u32> {
        grammar_mask(history).unwrap().iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i as u32).collect()
    }

    #[test]
    fn image_spans_take_exactly_256_tokens() {
        let mut h = vec![BOS, BOI_HEAD];
        let a = allowed(&h);
        assert!(a.iter().all(|&t| is_palette_image(t)));
        assert_eq!(a.len(), 28);
        h.extend(std::iter::repeat_n(IMAGE_BASE, 255));
        assert!(allowed(&h).iter().all(|&t| is_palette_image(t)));
        h.push(IMAGE_BASE);
        assert_eq!(allowed(&h), vec![EOI]);
    }

    #[test]
    fn after_a_stage_only_bot_or_end() {
        let mut h = vec![BOS];
        for boi in [BOI_HEAD, BOI_WRIST] {
            h.push(boi);
            h.extend(std::iter::repeat_n(IMAGE_BASE, 256));
            h.push(EOI);
        }
        h.extend([BOT, EOT]);
        assert_eq!(allowed(&h), vec![SEQ_END, BOT]);
        h.push(BOT);
        let text = allowed(&h);
        assert!(text.contains(&EOT) && text.iter().all(|&t| t == EOT || is_text(t)));
        h.push(EOT);
        for boi in [BOI_HEAD, BOI_WRIST] {
            h.push(boi);
            h.extend(std::iter::repeat_n(IMAGE_BASE, 256));
            h.push(EOI);
        }
        assert_eq!(allowed(&h), vec![STAGE_END]);
        h.push(STAGE_END);
        assert_eq!(allowed(&h), vec![SEQ_END, BOT]);
        h.push(SEQ_END);
        assert!(allowed(&h).is_empty());
    }

    #[test]
    fn invalid_prefixes_are_rejected() {
        assert!(grammar_mask(&[BOT]).is_err());
        assert!(grammar_mask(&[BOS, BOI_WRIST]).is_err());
    }
}

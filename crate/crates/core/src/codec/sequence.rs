//! Interleaved sequence assembly and the standalone grammar validator.
//!
//! ```text
//! sequence := BOS image(head) image(wrist) text stage* SEQ_END
//! stage    := text image(head) image(wrist) STAGE_END
//! text     := BOT text-token* EOT
//! image(v) := BOI_v image-token{256} EOI
//! ```
//! Image tokens must carry a declared palette code and text tokens must be
//! assigned words or fallback symbols. A sequence holds at most 16 images
//! (so at most 7 stages) and 16,384 tokens.

use super::raster::{detokenize_raster, tokenize_raster};
use super::text::tokenize_text;
use super::vocab::*;
use super::CodecError;
use crate::milestone::MilestonePlan;
use crate::toyworld::render::{is_declared_code, Observation, View, RASTER_CELLS};
use crate::toyworld::Episode;

pub const MAX_TOKENS: usize = 16_384;
pub const MAX_IMAGES: usize = 16;
/// Stages that fit next to the context frame within the image budget.
pub const MAX_STAGES: usize = MAX_IMAGES / 2 - 1;
pub const IMAGE_SPAN: usize = RASTER_CELLS + 2;

pub fn is_palette_image(token: u32) -> bool {
    is_image(token) && is_declared_code((token - IMAGE_BASE) as u8)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<u32>,
}

impl TokenSequence {
    /// Wraps tokens after checking the grammar.
    pub fn new(tokens: Vec<u32>) -> Result<Self, CodecError> {
        validate(&tokens)?;
        Ok(TokenSequence { tokens })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<u32> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Offsets of every STAGE_END token.
    pub fn stage_ends(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == STAGE_END)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of leading tokens (context frame and instruction) that are
    /// given rather than predicted.
    pub fn context_len(&self) -> usize {
        context_len(&self.tokens).expect("validated sequence")
    }
}

/// Decoded view of a valid sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSequence {
    pub context: Observation,
    pub instruction: Vec<u32>,
    pub stages: Vec<(Vec<u32>, Observation)>,
}

struct Cursor<'a> {
    tokens: &'a [u32],
    pos: usize,
}

impl Cursor<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, CodecError> {
        Err(CodecError::Grammar { position: self.pos, message: message.into() })
    }

    fn peek(&self) -> Option<u32> {
        self.tokens.get(self.pos).copied()
    }

    fn expect(&mut self, want: u32, name: &str) -> Result<(), CodecError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.fail(format!("expected {name}, found token {t}")),
            None => self.fail(format!("expected {name}, found end of sequence")),
        }
    }

    fn text(&mut self) -> Result<Vec<u32>, CodecError> {
        self.expect(BOT, "BOT")?;
        let start = self.pos;
        while let Some(t) = self.peek() {
            if t == EOT {
                let span = self.tokens[start..self.pos].to_vec();
                self.pos += 1;
                return Ok(span);
            }
            if !is_text(t) {
                return self.fail(format!("token {t} not allowed in text"));
            }
            self.pos += 1;
        }
        self.fail("unterminated text span")
    }

    fn image(&mut self, opener: u32, view: View) -> Result<crate::toyworld::Raster, CodecError> {
        self.expect(opener, if view == View::Head { "BOI_HEAD" } else { "BOI_WRIST" })?;
        let start = self.pos;
        for _ in 0..RASTER_CELLS {
            match self.peek() {
                Some(t) if is_palette_image(t) => self.pos += 1,
                Some(t) => return self.fail(format!("token {t} not allowed in image")),
                None => return self.fail("unterminated image span"),
            }
        }
        self.expect(EOI, "EOI")?;
        detokenize_raster(&self.tokens[start..start + RASTER_CELLS], view)
    }

    fn observation(&mut self) -> Result<Observation, CodecError> {
        Ok([self.image(BOI_HEAD, View::Head)?, self.image(BOI_WRIST, View::Wrist)?])
    }
}

/// Parses a complete sequence, rejecting anything outside the grammar or
/// the budgets.
pub fn parse(tokens: &[u32]) -> Result<ParsedSequence, CodecError> {
    if tokens.len() > MAX_TOKENS {
        return Err(CodecError::Budget { what: "tokens", required: tokens.len(), available: MAX_TOKENS });
    }
    let mut c = Cursor { tokens, pos: 0 };
    c.expect(BOS, "BOS")?;
    let context = c.observation()?;
    let instruction = c.text()?;
    let mut stages = Vec::new();
    loop {
        match c.peek() {
            Some(SEQ_END) => {
                c.pos += 1;
                break;
            }
            Some(BOT) => {
                if stages.len() == MAX_STAGES {
                    return c.fail(format!("more than {MAX_STAGES} stages exceed the image budget"));
                }
                let text = c.text()?;
                let goal = c.observation()?;
                c.expect(STAGE_END, "STAGE_END")?;
                stages.push((text, goal));
            }
            Some(t) => return c.fail(format!("expected BOT or SEQ_END, found token {t}")),
            None => return c.fail("missing SEQ_END"),
        }
    }
    if c.pos != tokens.len() {
        return c.fail("tokens after SEQ_END");
    }
    Ok(ParsedSequence { context, instruction, stages })
}

pub fn validate(tokens: &[u32]) -> Result<(), CodecError> {
    parse(tokens).map(|_| ())
}

fn context_len(tokens: &[u32]) -> Option<usize> {
    let start = 1 + 2 * IMAGE_SPAN;
    tokens.get(start..)?.iter().position(|&t| t == EOT).map(|i| start + i + 1)
}

/// `BOS · head · wrist · BOT instruction EOT` for an observation.
pub fn context_tokens(obs: &Observation, instruction: &str) -> Vec<u32> {
    let mut out = vec![BOS];
    push_observation(&mut out, obs);
    push_text(&mut out, instruction);
    out
}

/// `BOT text EOT · head · wrist · STAGE_END` for one stage.
pub fn stage_tokens(subtask: &str, goal: &Observation) -> Vec<u32> {
    let mut out = Vec::new();
    push_text(&mut out, subtask);
    push_observation(&mut out, goal);
    out.push(STAGE_END);
    out
}

fn push_text(out: &mut Vec<u32>, text: &str) {
    out.push(BOT);
    out.extend(tokenize_text(text));
    out.push(EOT);
}

fn push_observation(out: &mut Vec<u32>, obs: &Observation) {
    for (opener, raster) in [(BOI_HEAD, &obs[0]), (BOI_WRIST, &obs[1])] {
        out.push(opener);
        out.extend(tokenize_raster(raster));
        out.push(EOI);
    }
}

/// Builds the training sequence whose context frame is `start_frame` and
/// whose stages run from `start_stage` to the end of the plan.
pub fn assemble(
    episode: &Episode,
    plan: &MilestonePlan,
    start_frame: usize,
    start_stage: usize,
) -> Result<TokenSequence, CodecError> {
    plan.validate(episode.len()).map_err(|e| CodecError::InvalidPlan(e.to_string()))?;
    if start_stage >= plan.len() {
        return Err(CodecError::InvalidPlan(format!(
            "start stage {start_stage} but plan has {} stages",
            plan.len()
        )));
    }
    if start_frame >= episode.len() {
        return Err(CodecError::InvalidPlan(format!(
            "start frame {start_frame} beyond episode of {} frames",
            episode.len()
        )));
    }
    let stages = &plan.segments[start_stage..];
    let images = 2 + 2 * stages.len();
    if images > MAX_IMAGES {
        return Err(CodecError::Budget { what: "images", required: images, available: MAX_IMAGES });
    }
    let mut tokens = context_tokens(&episode.rasters[start_frame], &plan.instruction);
    for s in stages {
        let goal = [
            episode.rasters[s.goal_frames[0]][0].clone(),
            episode.rasters[s.goal_frames[1]][1].clone(),
        ];
        tokens.extend(stage_tokens(&s.subtask, &goal));
    }
    tokens.push(SEQ_END);
    if tokens.len() > MAX_TOKENS {
        return Err(CodecError::Budget { what: "tokens", required: tokens.len(), available: MAX_TOKENS });
    }
    TokenSequence::new(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::Raster;

    fn obs(code: u8) -> Observation {
        [Raster::filled(View::Head, code), Raster::filled(View::Wrist, code)]
    }

    fn sequence(stages: usize) -> Vec<u32> {
        let mut t = context_tokens(&obs(1), "put the egg on the plate");
        for i in 0..stages {
            t.extend(stage_tokens("pick up the egg", &obs(2 + i as u8)));
        }
        t.push(SEQ_END);
        t
    }

    #[test]
    fn zero_and_max_stage_sequences_parse() {
        let p = parse(&sequence(0)).unwrap();
        assert!(p.stages.is_empty());
        let p = parse(&sequence(MAX_STAGES)).unwrap();
        assert_eq!(p.stages.len(), MAX_STAGES);
        assert!(parse(&sequence(MAX_STAGES + 1)).is_err());
    }

    #[test]
    fn structural_damage_is_rejected() {
        let good = sequence(2);
        let mut t = good.clone();
        t.pop();
        assert!(validate(&t).is_err());
        let mut t = good.clone();
        t.push(SEQ_END);
        assert!(validate(&t).is_err());
        let mut t = good.clone();
        t[3] = PAD;
        assert!(validate(&t).is_err());
        let mut t = good;
        t[5] = IMAGE_BASE + 9;
        assert!(validate(&t).is_err());
    }

    #[test]
    fn context_length_covers_frame_and_instruction() {
        let s = TokenSequence::new(sequence(1)).unwrap();
        assert_eq!(s.context_len(), 1 + 2 * IMAGE_SPAN + 2 + 6);
        assert_eq!(s.stage_ends().len(), 1);
    }
}

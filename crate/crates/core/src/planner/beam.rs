//! Beam search over a next-token model.
//!
//! Scores are raw log-probability sums (no length normalization). Every
//! candidate that emits the end token is archived when it is created and
//! stays frozen in the beam; the search stops once the whole beam has
//! finished and returns the best archived candidate.
//! Equal scores are broken by the lexicographically smaller token sequence.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grammar::GrammarState;
use super::model::NextTokenModel;
use super::PlannerError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub width: usize,
    pub max_new_tokens: usize,
    /// Expand beam candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { width: 4, max_new_tokens: 8192, parallel: false }
    }
}

/// Which continuations are admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// The sequence grammar; finishes on SEQ_END.
    Grammar,
    /// Any token; finishes on `end`.
    Free { end: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
    state: Option<GrammarState>,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Top-`width` admissible continuations of one candidate.
fn expand(model: &dyn NextTokenModel, h: &Hypothesis, constraint: Constraint, width: usize) -> Vec<Hypothesis> {
    let p = model.next_distribution(&h.tokens);
    let mut options: Vec<(u32, f64, Option<GrammarState>)> = Vec::new();
    for (t, &pt) in p.iter().enumerate() {
        let t = t as u32;
        if pt <= 0.0 {
            continue;
        }
        match (constraint, h.state) {
            (Constraint::Grammar, Some(state)) => {
                if let Some(next) = state.accept(t) {
                    options.push((t, pt, Some(next)));
                }
            }
            _ => options.push((t, pt, None)),
        }
    }
    let z: f64 = options.iter().map(|o| o.1).sum();
    if options.is_empty() || !(z > 0.0) {
        return Vec::new();
    }
    options.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    options.truncate(width);
    options
        .into_iter()
        .map(|(t, pt, state)| {
            let mut tokens = h.tokens.clone();
            tokens.push(t);
            let finished = match constraint {
                Constraint::Grammar => state.is_some_and(|s| s.is_done()),
                Constraint::Free { end } => t == end,
            };
            Hypothesis { tokens, log_prob: h.log_prob + (pt / z).ln(), finished, state }
        })
        .collect()
}

/// Beam search from `prefix` under an explicit constraint.
pub fn beam_search_with(
    model: &dyn NextTokenModel,
    prefix: &[u32],
    cfg: &BeamConfig,
    constraint: Constraint,
) -> Result<Hypothesis, PlannerError> {
    if cfg.width == 0 {
        return Err(PlannerError::InvalidConfig("beam width must be at least 1".into()));
    }
    if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= model.vocab_size()) {
        return Err(PlannerError::TokenOutOfRange(bad));
    }
    let state = match constraint {
        Constraint::Grammar => Some(GrammarState::from_prefix(prefix)?),
        Constraint::Free { .. } => None,
    };
    let mut beam = vec![Hypothesis { tokens: prefix.to_vec(), log_prob: 0.0, finished: false, state }];
    let mut archive: Vec<Hypothesis> = Vec::new();
    for _ in 0..cfg.max_new_tokens {
        let (done, open): (Vec<Hypothesis>, Vec<Hypothesis>) = beam.into_iter().partition(|h| h.finished);
        if open.is_empty() {
            beam = done;
            break;
        }
        let expanded: Vec<Vec<Hypothesis>> = if cfg.parallel {
            open.par_iter().map(|h| expand(model, h, constraint, cfg.width)).collect()
        } else {
            open.iter().map(|h| expand(model, h, constraint, cfg.width)).collect()
        };
        let mut pool = done;
        for h in expanded.into_iter().flatten() {
            if h.finished {
                archive.push(h.clone());
            }
            pool.push(h);
        }
        pool.sort_by(better);
        pool.truncate(cfg.width);
        beam = pool;
        if beam.is_empty() {
            break;
        }
    }
    archive.sort_by(better);
    match archive.into_iter().next() {
        Some(best) => Ok(best),
        None => {
            let best = beam.into_iter().min_by(better);
            let (best, score) = best.map(|h| (h.tokens, h.log_prob)).unwrap_or((prefix.to_vec(), f64::NEG_INFINITY));
            Err(PlannerError::Unfinished { max_new_tokens: cfg.max_new_tokens, best, score })
        }
    }
}

/// Grammar-constrained beam search; the result is a complete sequence.
pub fn beam_search(model: &dyn NextTokenModel, prefix: &[u32], cfg: &BeamConfig) -> Result<Hypothesis, PlannerError> {
    beam_search_with(model, prefix, cfg, Constraint::Grammar)
}

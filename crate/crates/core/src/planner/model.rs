//! Next-token model contract and cross-entropy evaluation.

use super::PlannerError;
use crate::codec::TokenSequence;

/// An autoregressive model over a fixed vocabulary.
pub trait NextTokenModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Probabilities of the next token after `history`; non-negative and
    /// summing to one.
    fn next_distribution(&self, history: &[u32]) -> Vec<f64>;
}

impl<M: NextTokenModel + ?Sized> NextTokenModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        (**self).next_distribution(history)
    }
}

impl<M: NextTokenModel + ?Sized> NextTokenModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        (**self).next_distribution(history)
    }
}

/// Assigns equal probability to every token.
#[derive(Clone, Copy, Debug)]
pub struct UniformModel {
    pub vocab: usize,
}

impl NextTokenModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn next_distribution(&self, _history: &[u32]) -> Vec<f64> {
        vec![1.0 / self.vocab as f64; self.vocab]
    }
}

/// Mean negative log-likelihood (nats/token) of `tokens[from..]`, each
/// conditioned on everything before it.
pub fn sequence_nll(model: &dyn NextTokenModel, tokens: &[u32], from: usize) -> Result<f64, PlannerError> {
    if from >= tokens.len() {
        return Err(PlannerError::EmptyCorpus);
    }
    let mut total = 0.0;
    for k in from..tokens.len() {
        let p = model.next_distribution(&tokens[..k])[tokens[k] as usize];
        if p <= 0.0 {
            return Err(PlannerError::ZeroProbability { position: k, token: tokens[k] });
        }
        total -= p.ln();
    }
    Ok(total / (tokens.len() - from) as f64)
}

/// Cross-entropy over the plan tokens of a sequence; the context frame and
/// instruction are given, not predicted.
pub fn ce_loss(model: &dyn NextTokenModel, sequence: &TokenSequence) -> Result<f64, PlannerError> {
    sequence_nll(model, sequence.tokens(), sequence.context_len())
}

/// Fraction of supervised positions where the most probable token (lowest
/// id on ties) is the recorded one.
pub fn top1_accuracy(model: &dyn NextTokenModel, sequences: &[TokenSequence]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in sequences {
        let t = s.tokens();
        for k in s.context_len()..t.len() {
            let p = model.next_distribution(&t[..k]);
            let best = argmax(&p);
            hits += (best == t[k] as usize) as usize;
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

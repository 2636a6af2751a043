//! Fixed-window neural next-token model.
//!
//! The previous `context` tokens (PAD-filled on the left) are embedded,
//! concatenated and fed through a tanh MLP to vocabulary logits. Training
//! is teacher-forced cross-entropy over supervised positions with Adam.

use ndarray::{s, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::NextTokenModel;
use super::PlannerError;
use crate::checkpoint::{Checkpoint, Tensor};
use crate::codec::vocab::PAD;
use crate::nn::optim::{Optimizer, OptimizerConfig};
use crate::nn::{cast, Float, Mlp, Parameters};
use crate::rng::{rng_from_seed, Rng};

pub const KIND: &str = "context-mlp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub context: usize,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { context: 64, embedding_dim: 32, hidden: vec![128, 128] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextMlp<F> {
    pub context: usize,
    pub embedding: Array2<F>,
    pub mlp: Mlp<F>,
}

impl<F: Float> ContextMlp<F> {
    pub fn init(cfg: &MlpConfig, vocab: usize, rng: &mut Rng) -> Result<Self, PlannerError> {
        if cfg.context == 0 || cfg.embedding_dim == 0 || vocab == 0 || cfg.hidden.contains(&0) {
            return Err(PlannerError::InvalidConfig(format!("context MLP sizes must be positive: {cfg:?}")));
        }
        let scale = 1.0 / (cfg.embedding_dim as f64).sqrt();
        let embedding =
            Array2::from_shape_simple_fn((vocab, cfg.embedding_dim), || cast(rng.random_range(-scale..scale)));
        let mut sizes = vec![cfg.context * cfg.embedding_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(vocab);
        Ok(ContextMlp { context: cfg.context, embedding, mlp: Mlp::init(&sizes, rng) })
    }

    pub fn vocab(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        ContextMlp { context: self.context, embedding: Array2::zeros(self.embedding.raw_dim()), mlp: self.mlp.zeros_like() }
    }

    pub fn cast<G: Float>(&self) -> ContextMlp<G> {
        ContextMlp { context: self.context, embedding: self.embedding.mapv(cast), mlp: self.mlp.cast() }
    }

    /// Last `context` tokens of `history`, PAD-filled on the left.
    pub fn window(&self, history: &[u32]) -> Vec<u32> {
        let take = history.len().min(self.context);
        let mut w = vec![PAD; self.context - take];
        w.extend_from_slice(&history[history.len() - take..]);
        w
    }

    fn features(&self, windows: &[Vec<u32>]) -> Array2<F> {
        let d = self.dim();
        let mut x = Array2::zeros((windows.len(), self.context * d));
        for (i, w) in windows.iter().enumerate() {
            for (j, &t) in w.iter().enumerate() {
                x.slice_mut(s![i, j * d..(j + 1) * d]).assign(&self.embedding.row(t as usize));
            }
        }
        x
    }

    /// Vocabulary logits for each history.
    pub fn logits(&self, histories: &[&[u32]]) -> Array2<F> {
        let windows: Vec<Vec<u32>> = histories.iter().map(|h| self.window(h)).collect();
        self.mlp.predict(self.features(&windows))
    }

    /// Summed cross-entropy of `targets` after `histories`, and its gradient.
    pub fn loss_and_grad(&self, histories: &[&[u32]], targets: &[u32]) -> (f64, ContextMlp<F>) {
        let windows: Vec<Vec<u32>> = histories.iter().map(|h| self.window(h)).collect();
        let (logits, cache) = self.mlp.forward(self.features(&windows));
        let mut loss = 0.0f64;
        let mut dlogits = logits;
        for (mut row, &t) in dlogits.axis_iter_mut(Axis(0)).zip(targets) {
            let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
            let p: f64 = cast(row[t as usize]);
            loss -= p.ln();
            row[t as usize] -= F::one();
        }
        let mut grad = self.zeros_like();
        let dx = self.mlp.backward(&cache, dlogits, &mut grad.mlp, true).expect("input gradient requested");
        let d = self.dim();
        for (i, w) in windows.iter().enumerate() {
            for (j, &t) in w.iter().enumerate() {
                let mut e = grad.embedding.row_mut(t as usize);
                e += &dx.slice(s![i, j * d..(j + 1) * d]);
            }
        }
        (loss, grad)
    }

    fn add_assign(&mut self, other: &ContextMlp<F>) {
        let theirs = other.named_tensors();
        for (mut mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine += &t;
        }
    }

    /// Mean NLL and top-1 accuracy over `tokens[from..]` of each pair, in
    /// batches of `batch` positions.
    pub fn evaluate(&self, corpus: &[(&[u32], usize)], batch: usize) -> (f64, f64) {
        let positions: Vec<(usize, usize)> =
            corpus.iter().enumerate().flat_map(|(s, (t, from))| (*from..t.len()).map(move |k| (s, k))).collect();
        if positions.is_empty() {
            return (0.0, 0.0);
        }
        let mut nll = 0.0;
        let mut hits = 0usize;
        for chunk in positions.chunks(batch.max(1)) {
            let histories: Vec<&[u32]> = chunk.iter().map(|&(s, k)| &corpus[s].0[..k]).collect();
            let logits = self.logits(&histories);
            for (row, &(s, k)) in logits.axis_iter(Axis(0)).zip(chunk) {
                let p = softmax(row.iter().map(|&v| cast::<F, f64>(v)));
                let target = corpus[s].0[k] as usize;
                nll -= p[target].ln();
                hits += (super::model::argmax(&p) == target) as usize;
            }
        }
        (nll / positions.len() as f64, hits as f64 / positions.len() as f64)
    }
}

fn softmax(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = logits.collect();
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

impl<F: Float> Parameters<F> for ContextMlp<F> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = vec![("embedding".to_string(), self.embedding.view().into_dyn())];
        out.extend(self.mlp.tensors("mlp"));
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut out = vec![self.embedding.view_mut().into_dyn()];
        out.extend(self.mlp.tensors_mut());
        out
    }
}

impl<F: Float> NextTokenModel for ContextMlp<F> {
    fn vocab_size(&self) -> usize {
        self.vocab()
    }

    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        softmax(self.logits(&[history]).iter().map(|&v| cast::<F, f64>(v)))
    }
}

impl ContextMlp<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(KIND);
        let mut meta = vec![self.vocab() as f32, self.context as f32, self.dim() as f32];
        meta.extend(self.mlp.layers[..self.mlp.layers.len() - 1].iter().map(|l| l.outputs() as f32));
        c.push(Tensor::scalar_list("meta", meta));
        for (name, t) in self.named_tensors() {
            c.push(Tensor::from_view(name, t));
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, PlannerError> {
        c.expect_kind(KIND)?;
        let meta: Vec<usize> = c.get("meta")?.data.iter().map(|&v| v as usize).collect();
        if meta.len() < 3 {
            return Err(PlannerError::InvalidConfig("context MLP checkpoint meta".into()));
        }
        let cfg = MlpConfig { context: meta[1], embedding_dim: meta[2], hidden: meta[3..].to_vec() };
        let mut model = ContextMlp::<f32>::init(&cfg, meta[0], &mut rng_from_seed(0))?;
        let names: Vec<(String, Vec<usize>)> =
            model.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        for (view, (name, shape)) in model.tensors_mut().into_iter().zip(names) {
            let mut view = view;
            view.assign(&c.array(&name, &shape)?);
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    /// Gradient shards computed in parallel and summed in shard order; 1
    /// keeps training single-threaded.
    pub shards: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 2000, batch: 32, seed: 0, shards: 1, optimizer: OptimizerConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss (nats/token) per step.
    pub losses: Vec<f64>,
}

/// Trains on every position `k >= from` of each `(tokens, from)` pair,
/// drawing batch positions uniformly with replacement.
pub fn train_context_mlp(
    model: &mut ContextMlp<f32>,
    corpus: &[(&[u32], usize)],
    cfg: &TrainConfig,
) -> Result<TrainReport, PlannerError> {
    let positions: Vec<(usize, usize)> =
        corpus.iter().enumerate().flat_map(|(s, (t, from))| (*from..t.len()).map(move |k| (s, k))).collect();
    if positions.is_empty() {
        return Err(PlannerError::EmptyCorpus);
    }
    if let Some(&bad) = corpus.iter().flat_map(|(t, _)| t.iter()).find(|&&t| t as usize >= model.vocab()) {
        return Err(PlannerError::TokenOutOfRange(bad));
    }
    if cfg.batch == 0 || cfg.shards == 0 {
        return Err(PlannerError::InvalidConfig("batch and shards must be positive".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer.clone(), cfg.steps);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let picks: Vec<(usize, usize)> =
            (0..cfg.batch).map(|_| positions[rng.random_range(0..positions.len())]).collect();
        let histories: Vec<&[u32]> = picks.iter().map(|&(s, k)| &corpus[s].0[..k]).collect();
        let targets: Vec<u32> = picks.iter().map(|&(s, k)| corpus[s].0[k]).collect();
        let (loss, grad) = if cfg.shards == 1 {
            model.loss_and_grad(&histories, &targets)
        } else {
            let per = cfg.batch.div_ceil(cfg.shards);
            let parts: Vec<(f64, ContextMlp<f32>)> = histories
                .par_chunks(per)
                .zip(targets.par_chunks(per))
                .map(|(h, t)| model.loss_and_grad(h, t))
                .collect();
            let mut iter = parts.into_iter();
            let (mut loss, mut grad) = iter.next().expect("at least one shard");
            for (l, g) in iter {
                loss += l;
                grad.add_assign(&g);
            }
            (loss, grad)
        };
        let mean = loss / cfg.batch as f64;
        if !mean.is_finite() {
            return Err(PlannerError::NonFinite { step });
        }
        losses.push(mean);
        let grads: Vec<ArrayViewD<'_, f32>> = grad.named_tensors().into_iter().map(|(_, t)| t).collect();
        opt.update(model.tensors_mut(), grads, 1.0 / cfg.batch as f64);
        if !model.all_finite() {
            return Err(PlannerError::NonFinite { step });
        }
    }
    Ok(TrainReport { losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{get_param, set_param};

    fn tiny() -> ContextMlp<f64> {
        let cfg = MlpConfig { context: 4, embedding_dim: 3, hidden: vec![5, 6] };
        ContextMlp::<f32>::init(&cfg, 11, &mut rng_from_seed(9)).unwrap().cast()
    }

    #[test]
    fn distributions_are_normalized() {
        let m = tiny();
        for h in [&[][..], &[1, 2], &[3, 4, 5, 6, 7, 10]] {
            let p = m.next_distribution(h);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let m = tiny();
        let seq = [1u32, 4, 4, 9, 2, 10, 0, 4];
        let histories: Vec<&[u32]> = (2..seq.len()).map(|k| &seq[..k]).collect();
        let targets: Vec<u32> = (2..seq.len()).map(|k| seq[k]).collect();
        let (_, g) = m.loss_and_grad(&histories, &targets);
        let n = m.parameter_count();
        for i in 0..n {
            let mut p = m.clone();
            let v = get_param(&p, i);
            set_param(&mut p, i, v + 1e-5);
            let up = p.loss_and_grad(&histories, &targets).0;
            set_param(&mut p, i, v - 1e-5);
            let down = p.loss_and_grad(&histories, &targets).0;
            let fd = (up - down) / 2e-5;
            let an = get_param(&g, i);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "param {i}: {fd} vs {an}");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let m = ContextMlp::<f32>::init(&MlpConfig { context: 5, embedding_dim: 2, hidden: vec![4] }, 7, &mut rng_from_seed(1))
            .unwrap();
        let back = ContextMlp::from_checkpoint(&Checkpoint::decode(&m.to_checkpoint().encode()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}

//! Seeded training loop for the flow policy.

use ndarray::ArrayViewD;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::PolicySample;
use super::features::Conditioning;
use super::flow::FlowSample;
use super::net::{FlowPolicy, LossWeighting};
use super::{ActionChunk, PolicyError, CHUNK_DIM};
use crate::nn::optim::{Optimizer, OptimizerConfig};
use crate::nn::Parameters;
use crate::rng::{derived_rng, rng_from_seed};

/// Consecutive steps above 10× the initial loss that count as divergence.
const DIVERGENCE_PATIENCE: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    /// Gradient shards computed in parallel and summed in shard order.
    pub shards: usize,
    pub optimizer: OptimizerConfig,
    pub weighting: LossWeighting,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        PolicyTrainConfig { steps: 20_000, batch: 64, seed: 0, shards: 1, optimizer: OptimizerConfig::default(), weighting: LossWeighting::Chunk }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrainReport {
    pub losses: Vec<f64>,
}

/// Draws batches uniformly with replacement from a seeded stream and trains.
pub fn train_policy(
    policy: &mut FlowPolicy<f32>,
    samples: &[PolicySample],
    cfg: &PolicyTrainConfig,
) -> Result<PolicyTrainReport, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let batches: Vec<Vec<usize>> =
        (0..cfg.steps).map(|_| (0..cfg.batch).map(|_| rng.random_range(0..samples.len())).collect()).collect();
    train_on_batches(policy, samples, &batches, cfg)
}

fn flow_chunk(sample: &PolicySample, scale: f32) -> ActionChunk {
    let mut a = [0.0; CHUNK_DIM];
    for (o, &v) in a.iter_mut().zip(&sample.chunk) {
        *o = v / scale;
    }
    a
}

/// Trains on explicit per-step batches of sample indices. Noise and flow
/// times come from a stream keyed by `(seed, step)`, so the result depends
/// only on batch contents, not on where samples sit in the dataset.
pub fn train_on_batches(
    policy: &mut FlowPolicy<f32>,
    samples: &[PolicySample],
    batches: &[Vec<usize>],
    cfg: &PolicyTrainConfig,
) -> Result<PolicyTrainReport, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    if cfg.batch == 0 || cfg.shards == 0 {
        return Err(PolicyError::InvalidConfig("batch and shards must be positive".into()));
    }
    let mut opt = Optimizer::new(cfg.optimizer.clone(), batches.len());
    let mut losses = Vec::with_capacity(batches.len());
    let mut above = 0usize;
    for (step, batch) in batches.iter().enumerate() {
        let mut noise = derived_rng(cfg.seed, &[1, step as u64]);
        let flows: Vec<FlowSample> = batch
            .iter()
            .map(|&i| {
                let s = samples.get(i).ok_or_else(|| PolicyError::InvalidConfig(format!("sample index {i}")))?;
                super::flow::make_flow_sample(&flow_chunk(s, policy.action_scale), Conditioning::default(), &mut noise)
            })
            .collect::<Result<_, _>>()?;
        let conds: Vec<Conditioning> = batch.iter().map(|&i| samples[i].conditioning()).collect();
        let run = |range: std::ops::Range<usize>| {
            let xs: Vec<&[f32]> = flows[range.clone()].iter().map(|f| &f.x[..]).collect();
            let cs: Vec<&Conditioning> = conds[range.clone()].iter().collect();
            let taus: Vec<f32> = flows[range.clone()].iter().map(|f| f.tau).collect();
            let vs: Vec<&[f32]> = flows[range.clone()].iter().map(|f| &f.v[..]).collect();
            policy.loss_and_grad(&xs, &cs, &taus, &vs, cfg.weighting).map_err(|e| match e {
                PolicyError::NonFiniteLoss { index } => PolicyError::NonFiniteLoss { index: range.start + index },
                other => other,
            })
        };
        let n = batch.len();
        let (sum, grad) = if cfg.shards == 1 {
            run(0..n)?
        } else {
            let per = n.div_ceil(cfg.shards);
            let ranges: Vec<std::ops::Range<usize>> = (0..n).step_by(per).map(|a| a..(a + per).min(n)).collect();
            let parts: Vec<(f64, FlowPolicy<f32>)> =
                ranges.into_par_iter().map(run).collect::<Result<_, _>>()?;
            let mut iter = parts.into_iter();
            let (mut sum, mut grad) = iter.next().expect("non-empty batch");
            for (l, g) in iter {
                sum += l;
                grad.add_assign(&g);
            }
            (sum, grad)
        };
        let loss = sum / n as f64;
        losses.push(loss);
        if loss > 10.0 * losses[0] {
            above += 1;
            if above >= DIVERGENCE_PATIENCE {
                return Err(PolicyError::Diverged { step, loss, initial: losses[0] });
            }
        } else {
            above = 0;
        }
        let grads: Vec<ArrayViewD<'_, f32>> = grad.named_tensors().into_iter().map(|(_, t)| t).collect();
        opt.update(policy.tensors_mut(), grads, 1.0 / n as f64);
        if !policy.all_finite() {
            return Err(PolicyError::NonFiniteParameters { step });
        }
    }
    Ok(PolicyTrainReport { losses })
}

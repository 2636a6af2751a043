//! The velocity network.
//!
//! Input row: `x_τ` (120) · observation (536) · goal (536) · mean subtask
//! embedding (32) · proprioception (4) · `(τ, sin 2πτ, cos 2πτ)`, fed
//! through a tanh MLP to a 120-wide estimate `â` of the clean chunk; the
//! velocity is `(â − x_τ) / (1 − τ)`. Chunks live in flow space,
//! i.e. actions divided by `action_scale`, so targets are of unit order.

use ndarray::{s, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::features::{Conditioning, COND_WIDTH, OBS_WIDTH};
use super::flow::VelocityField;
use super::{PolicyError, CHUNK_DIM};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::codec::VOCAB_SIZE;
use crate::nn::{cast, Float, Mlp, Parameters};
use crate::rng::{rng_from_seed, Rng};
use crate::toyworld::state::ACTION_BOUND;

pub const KIND: &str = "flow-policy";
/// Floor on `1 − τ` so that the velocity stays finite at `τ = 1`.
pub const MIN_REMAINING: f32 = 1e-6;
pub const EMBEDDING_DIM: usize = 32;
pub const INPUT_WIDTH: usize = CHUNK_DIM + COND_WIDTH + 3;

const OBS_AT: usize = CHUNK_DIM;
const GOAL_AT: usize = OBS_AT + OBS_WIDTH;
const EMB_AT: usize = GOAL_AT + OBS_WIDTH;
const PROPRIO_AT: usize = EMB_AT + EMBEDDING_DIM;
const TAU_AT: usize = PROPRIO_AT + 4;

/// Per-sample weight of the squared velocity error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// Unweighted, the plain flow-matching loss.
    Velocity,
    /// Weighted by `(1 − τ)²`, which equals the squared error of the chunk
    /// estimate and keeps gradients bounded as `τ → 1`.
    Chunk,
}

fn remaining(tau: f32) -> f32 {
    (1.0 - tau).max(MIN_REMAINING)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    /// Zero the goal features: the language-only baseline.
    pub no_goal: bool,
    /// Action units per flow-space unit.
    pub action_scale: f32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: vec![256, 256], no_goal: false, action_scale: ACTION_BOUND }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowPolicy<F> {
    pub embedding: Array2<F>,
    pub mlp: Mlp<F>,
    pub no_goal: bool,
    pub action_scale: f32,
}

impl<F: Float> FlowPolicy<F> {
    pub fn init(cfg: &PolicyConfig, rng: &mut Rng) -> Result<Self, PolicyError> {
        if cfg.hidden.is_empty() || cfg.hidden.contains(&0) || !(cfg.action_scale > 0.0) {
            return Err(PolicyError::InvalidConfig(format!("bad policy shape {cfg:?}")));
        }
        let scale = 1.0 / (EMBEDDING_DIM as f64).sqrt();
        let embedding =
            Array2::from_shape_simple_fn((VOCAB_SIZE as usize, EMBEDDING_DIM), || cast(rng.random_range(-scale..scale)));
        let mut sizes = vec![INPUT_WIDTH];
        sizes.extend(&cfg.hidden);
        sizes.push(CHUNK_DIM);
        Ok(FlowPolicy { embedding, mlp: Mlp::init(&sizes, rng), no_goal: cfg.no_goal, action_scale: cfg.action_scale })
    }

    pub fn zeros_like(&self) -> Self {
        FlowPolicy {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            mlp: self.mlp.zeros_like(),
            no_goal: self.no_goal,
            action_scale: self.action_scale,
        }
    }

    pub fn cast<G: Float>(&self) -> FlowPolicy<G> {
        FlowPolicy {
            embedding: self.embedding.mapv(cast),
            mlp: self.mlp.cast(),
            no_goal: self.no_goal,
            action_scale: self.action_scale,
        }
    }

    /// Network input rows.
    pub fn inputs(&self, xs: &[&[f32]], conds: &[&Conditioning], taus: &[f32]) -> Array2<F> {
        let mut m = Array2::zeros((xs.len(), INPUT_WIDTH));
        for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
            let c = conds[i];
            for (j, &v) in xs[i].iter().enumerate() {
                row[j] = cast(v);
            }
            for (j, &v) in c.obs.iter().enumerate() {
                row[OBS_AT + j] = cast(v);
            }
            if !self.no_goal {
                for (j, &v) in c.goal.iter().enumerate() {
                    row[GOAL_AT + j] = cast(v);
                }
            }
            if !c.subtask.is_empty() {
                let mut emb = row.slice_mut(s![EMB_AT..EMB_AT + EMBEDDING_DIM]);
                for &t in &c.subtask {
                    emb += &self.embedding.row(t as usize);
                }
                let n: F = cast(c.subtask.len() as f64);
                emb.mapv_inplace(|v| v / n);
            }
            for (j, &v) in c.proprio.iter().enumerate() {
                row[PROPRIO_AT + j] = cast(v);
            }
            let tau = taus[i] as f64;
            let angle = 2.0 * std::f64::consts::PI * tau;
            row[TAU_AT] = cast(tau);
            row[TAU_AT + 1] = cast(angle.sin());
            row[TAU_AT + 2] = cast(angle.cos());
        }
        m
    }

    /// Velocities `(â − x) / (1 − τ)` from the network's chunk estimate `â`.
    pub fn velocities(&self, xs: &[&[f32]], conds: &[&Conditioning], taus: &[f32]) -> Array2<F> {
        let mut out = self.mlp.predict(self.inputs(xs, conds, taus));
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let r: F = cast(remaining(taus[i]));
            for (o, &x) in row.iter_mut().zip(xs[i]) {
                *o = (*o - cast(x)) / r;
            }
        }
        out
    }

    /// Summed squared error against velocity `targets` over the batch, and
    /// its gradient. Rows with a non-finite loss are reported by index.
    pub fn loss_and_grad(
        &self,
        xs: &[&[f32]],
        conds: &[&Conditioning],
        taus: &[f32],
        targets: &[&[f32]],
        weighting: LossWeighting,
    ) -> Result<(f64, FlowPolicy<F>), PolicyError> {
        let (out, cache) = self.mlp.forward(self.inputs(xs, conds, taus));
        let mut diff = out;
        let mut total = 0.0f64;
        for (i, mut row) in diff.axis_iter_mut(Axis(0)).enumerate() {
            let r = remaining(taus[i]) as f64;
            let mut sq = 0.0f64;
            for ((d, &t), &x) in row.iter_mut().zip(targets[i]).zip(xs[i]) {
                let a_hat: f64 = cast(*d);
                let (err, slope) = match weighting {
                    LossWeighting::Velocity => ((a_hat - x as f64) / r - t as f64, 1.0 / r),
                    // (1 − τ)² times the velocity error: the chunk error.
                    LossWeighting::Chunk => (a_hat - x as f64 - r * t as f64, 1.0),
                };
                sq += err * err;
                *d = cast(2.0 * err * slope);
            }
            if !sq.is_finite() {
                return Err(PolicyError::NonFiniteLoss { index: i });
            }
            total += sq;
        }
        let mut grad = self.zeros_like();
        let need_dx = conds.iter().any(|c| !c.subtask.is_empty());
        if let Some(dx) = self.mlp.backward(&cache, diff, &mut grad.mlp, need_dx) {
            for (i, c) in conds.iter().enumerate() {
                if c.subtask.is_empty() {
                    continue;
                }
                let n: F = cast(c.subtask.len() as f64);
                let d = dx.slice(s![i, EMB_AT..EMB_AT + EMBEDDING_DIM]).mapv(|v| v / n);
                for &t in &c.subtask {
                    let mut r = grad.embedding.row_mut(t as usize);
                    r += &d;
                }
            }
        }
        Ok((total, grad))
    }

    pub(crate) fn add_assign(&mut self, other: &FlowPolicy<F>) {
        let theirs = other.named_tensors();
        for (mut mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine += &t;
        }
    }
}

impl<F: Float> Parameters<F> for FlowPolicy<F> {
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

impl<F: Float> VelocityField for FlowPolicy<F> {
    fn velocity(&self, x: &[f32], cond: &Conditioning, tau: f32) -> Vec<f32> {
        self.velocities(&[x], &[cond], &[tau]).iter().map(|&v| cast::<F, f32>(v)).collect()
    }
}

impl FlowPolicy<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(KIND);
        let mut meta = vec![self.no_goal as u8 as f32, self.action_scale];
        meta.extend(self.mlp.layers[..self.mlp.layers.len() - 1].iter().map(|l| l.outputs() as f32));
        c.push(Tensor::scalar_list("meta", meta));
        for (name, t) in self.named_tensors() {
            c.push(Tensor::from_view(name, t));
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, PolicyError> {
        c.expect_kind(KIND)?;
        let meta = &c.get("meta")?.data;
        if meta.len() < 3 {
            return Err(PolicyError::InvalidConfig("policy checkpoint meta".into()));
        }
        let cfg = PolicyConfig {
            no_goal: meta[0] != 0.0,
            action_scale: meta[1],
            hidden: meta[2..].iter().map(|&v| v as usize).collect(),
        };
        let mut p = FlowPolicy::<f32>::init(&cfg, &mut rng_from_seed(0))?;
        let shapes: Vec<(String, Vec<usize>)> =
            p.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        for (mut view, (name, shape)) in p.tensors_mut().into_iter().zip(shapes) {
            view.assign(&c.array(&name, &shape)?);
        }
        Ok(p)
    }
}

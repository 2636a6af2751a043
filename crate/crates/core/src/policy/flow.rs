//! Flow-matching samples, loss and the Euler sampler.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::features::Conditioning;
use super::net::{FlowPolicy, LossWeighting};
use super::{ActionChunk, PolicyError, CHUNK_DIM};
use crate::nn::Float;
use crate::rng::Rng;

/// Anything that predicts a flow-space velocity.
pub trait VelocityField: Sync {
    fn velocity(&self, x: &[f32], cond: &Conditioning, tau: f32) -> Vec<f32>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub z: ActionChunk,
    pub tau: f32,
    /// `(1 − τ)·z + τ·a`.
    pub x: ActionChunk,
    /// `a − z`.
    pub v: ActionChunk,
    pub cond: Conditioning,
}

impl FlowSample {
    /// Builds the interpolant for given noise and time.
    pub fn at(a: &ActionChunk, z: ActionChunk, tau: f32, cond: Conditioning) -> Self {
        let mut x = [0.0; CHUNK_DIM];
        let mut v = [0.0; CHUNK_DIM];
        for i in 0..CHUNK_DIM {
            x[i] = (1.0 - tau) * z[i] + tau * a[i];
            v[i] = a[i] - z[i];
        }
        FlowSample { z, tau, x, v, cond }
    }
}

pub fn standard_normal_chunk(rng: &mut Rng) -> ActionChunk {
    let mut z = [0.0; CHUNK_DIM];
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    z
}

/// Draws `z ~ N(0, I)` and `τ ~ U(0, 1)` for a flow-space chunk `a`.
pub fn make_flow_sample(a: &ActionChunk, cond: Conditioning, rng: &mut Rng) -> Result<FlowSample, PolicyError> {
    if let Some(index) = a.iter().position(|v| !v.is_finite()) {
        return Err(PolicyError::NonFiniteInput { index });
    }
    let z = standard_normal_chunk(rng);
    let tau = rng.random::<f32>();
    Ok(FlowSample::at(a, z, tau, cond))
}

/// Mean over the batch of `‖policy(x_τ, cond, τ) − v_τ‖²`, with gradients.
pub fn flow_loss<F: Float>(policy: &FlowPolicy<F>, samples: &[FlowSample]) -> Result<(f64, FlowPolicy<F>), PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let xs: Vec<&[f32]> = samples.iter().map(|s| &s.x[..]).collect();
    let conds: Vec<&Conditioning> = samples.iter().map(|s| &s.cond).collect();
    let taus: Vec<f32> = samples.iter().map(|s| s.tau).collect();
    let targets: Vec<&[f32]> = samples.iter().map(|s| &s.v[..]).collect();
    let (sum, grad) = policy.loss_and_grad(&xs, &conds, &taus, &targets, LossWeighting::Velocity)?;
    Ok((sum / samples.len() as f64, grad))
}

/// Euler integration from `z` over `steps` equal steps. The state is kept
/// in 64 bits so that constant velocities telescope exactly.
pub fn integrate(field: &dyn VelocityField, cond: &Conditioning, z: &ActionChunk, steps: usize) -> Result<ActionChunk, PolicyError> {
    if steps == 0 {
        return Err(PolicyError::InvalidConfig("sampler needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x: Vec<f64> = z.iter().map(|&v| v as f64).collect();
    let mut x32: Vec<f32> = z.to_vec();
    for j in 0..steps {
        let v = field.velocity(&x32, cond, (j as f64 * dt) as f32);
        for i in 0..CHUNK_DIM {
            x[i] += dt * v[i] as f64;
            x32[i] = x[i] as f32;
        }
        if x32.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteSample { step: j });
        }
    }
    let mut out = [0.0; CHUNK_DIM];
    out.copy_from_slice(&x32);
    Ok(out)
}

/// Draws noise and integrates it to a flow-space chunk.
pub fn sample_chunk(field: &dyn VelocityField, cond: &Conditioning, steps: usize, rng: &mut Rng) -> Result<ActionChunk, PolicyError> {
    let z = standard_normal_chunk(rng);
    integrate(field, cond, &z, steps)
}

//! First-order optimizers over 32-bit parameters with 64-bit state.

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Momentum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from `lr` to `0.05 * lr` over the run.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub schedule: LrSchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
            clip_norm: 0.0,
            schedule: LrSchedule::Constant,
        }
    }
}

pub struct Optimizer {
    config: OptimizerConfig,
    total_steps: usize,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, total_steps: usize) -> Self {
        Optimizer { config, total_steps: total_steps.max(1), step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn current_lr(&self) -> f64 {
        match self.config.schedule {
            LrSchedule::Constant => self.config.lr,
            LrSchedule::Cosine => {
                let progress = (self.step as f64 / self.total_steps as f64).min(1.0);
                let floor = 0.05;
                self.config.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
            }
        }
    }

    /// Applies one update. `grads` must list tensors in the same order and
    /// shapes as `params`; `scale` multiplies every gradient first (e.g. to
    /// turn a sum into a mean).
    pub fn update(&mut self, params: Vec<ArrayViewMutD<'_, f32>>, grads: Vec<ArrayViewD<'_, f32>>, scale: f64) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            if self.config.kind == OptimizerKind::Adam {
                self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            }
        }
        let mut scale = scale;
        if self.config.clip_norm > 0.0 {
            let norm: f64 = grads
                .iter()
                .flat_map(|g| g.iter())
                .map(|&v| {
                    let v = v as f64 * scale;
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            if norm > self.config.clip_norm {
                scale *= self.config.clip_norm / norm;
            }
        }
        let lr = self.current_lr();
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (k, (mut p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "shape mismatch in tensor {k}");
            let m = &mut self.first[k];
            match c.kind {
                OptimizerKind::Adam => {
                    let v = &mut self.second[k];
                    for (i, (pv, &gv)) in p.iter_mut().zip(g.iter()).enumerate() {
                        let gv = gv as f64 * scale;
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gv;
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gv * gv;
                        let step = lr * (m[i] / bias1) / ((v[i] / bias2).sqrt() + c.eps);
                        *pv = (*pv as f64 - step) as f32;
                    }
                }
                OptimizerKind::Momentum => {
                    for (i, (pv, &gv)) in p.iter_mut().zip(g.iter()).enumerate() {
                        m[i] = c.momentum * m[i] + gv as f64 * scale;
                        *pv = (*pv as f64 - lr * m[i]) as f32;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn minimize(kind: OptimizerKind) -> f32 {
        let mut x = Array1::from(vec![3.0f32, -2.0]);
        let cfg = OptimizerConfig { kind, lr: 0.05, ..Default::default() };
        let mut opt = Optimizer::new(cfg, 500);
        for _ in 0..500 {
            let g = x.mapv(|v| 2.0 * v);
            opt.update(vec![x.view_mut().into_dyn()], vec![g.view().into_dyn()], 1.0);
        }
        x.iter().map(|v| v.abs()).fold(0.0, f32::max)
    }

    #[test]
    fn both_optimizers_minimize_a_quadratic() {
        assert!(minimize(OptimizerKind::Adam) < 1e-2);
        assert!(minimize(OptimizerKind::Momentum) < 1e-3);
    }

    #[test]
    fn cosine_schedule_decays_to_the_floor() {
        let cfg = OptimizerConfig { schedule: LrSchedule::Cosine, lr: 1.0, ..Default::default() };
        let mut opt = Optimizer::new(cfg, 10);
        assert!((opt.current_lr() - 1.0).abs() < 1e-12);
        opt.step = 10;
        assert!((opt.current_lr() - 0.05).abs() < 1e-12);
    }
}

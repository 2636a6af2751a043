//! Seeded multi-rollout evaluation and metric aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policies::{ChunkPolicy, ExpertPolicy, ZeroPolicy};
use super::rollout::{ground_truth_steps, run_task, PlanSource, TaskResult};
use super::{ExecutorConfig, ExecutorError};
use crate::milestone::{label_episode, LabelConfig, RuleAnnotator, SkillLibrary};
use crate::planner::{BeamConfig, NextTokenModel, PlanStep};
use crate::policy::FlowPolicy;
use crate::rng::derived_rng;
use crate::toyworld::{object_category, scripted_expert, ScenarioDescriptor};

/// A policy under evaluation.
#[derive(Clone, Copy)]
pub enum EvalPolicy<'a> {
    /// Replays the scripted expert of each scenario.
    Expert,
    Zero,
    Flow(&'a FlowPolicy<f32>),
}

#[derive(Clone, Debug)]
pub struct ScenarioSet {
    pub name: String,
    pub scenarios: Vec<ScenarioDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub rollouts: usize,
    pub master_seed: u64,
    pub executor: ExecutorConfig,
    pub label: LabelConfig,
    pub beam: BeamConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rollouts: 3,
            master_seed: 0,
            executor: ExecutorConfig::default(),
            label: LabelConfig::default(),
            beam: BeamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub set: String,
    /// Target category, or `all`.
    pub category: String,
    /// Tablecloth code, or `all`.
    pub tablecloth: String,
    pub approach: f64,
    pub success: f64,
    pub n: usize,
}

/// Expert episode and plan steps of a scenario.
fn expert_for(scenario: &ScenarioDescriptor, label: &LabelConfig) -> Result<(ExpertPolicy, Vec<PlanStep>), ExecutorError> {
    let (episode, _) = scripted_expert(scenario)?;
    let plan = label_episode(&episode, label, &SkillLibrary::default(), &RuleAnnotator)?;
    let steps = ground_truth_steps(&episode, &plan);
    Ok((ExpertPolicy { episode, plan }, steps))
}

/// Runs `cfg.rollouts` seeded rollouts of one policy on one scenario. With
/// `planner` the plan is decoded by the world model, otherwise it comes
/// from the labeled expert episode.
pub fn rollouts(
    policy: EvalPolicy<'_>,
    scenario: &ScenarioDescriptor,
    planner: Option<&dyn NextTokenModel>,
    cfg: &EvalConfig,
) -> Result<Vec<TaskResult>, ExecutorError> {
    let (expert, steps) = expert_for(scenario, &cfg.label)?;
    let source = match planner {
        Some(model) => PlanSource::WorldModel { model, beam: cfg.beam.clone() },
        None => PlanSource::GroundTruth(steps),
    };
    let chunk_policy: &dyn ChunkPolicy = match policy {
        EvalPolicy::Expert => &expert,
        EvalPolicy::Zero => &ZeroPolicy,
        EvalPolicy::Flow(p) => p,
    };
    (0..cfg.rollouts)
        .map(|r| {
            let mut rng = derived_rng(cfg.master_seed, &[scenario.id as u64, r as u64]);
            run_task(scenario, &source, chunk_policy, &cfg.executor, &mut rng)
        })
        .collect()
}

#[derive(Default, Clone, Copy)]
struct Tally {
    approach: usize,
    success: usize,
    n: usize,
}

/// Evaluates every policy on every set. Scenarios run in parallel; counts
/// are summed, so the result does not depend on scheduling.
pub fn evaluate(
    policies: &[(String, EvalPolicy<'_>)],
    sets: &[ScenarioSet],
    planner: Option<&dyn NextTokenModel>,
    cfg: &EvalConfig,
) -> Result<Vec<MetricsRow>, ExecutorError> {
    cfg.executor.validate()?;
    let mut rows = Vec::new();
    for (name, policy) in policies {
        for set in sets {
            let results: Vec<(&ScenarioDescriptor, Vec<TaskResult>)> = set
                .scenarios
                .par_iter()
                .map(|s| rollouts(*policy, s, planner, cfg).map(|r| (s, r)))
                .collect::<Result<_, _>>()?;
            let mut groups: BTreeMap<(String, String), Tally> = BTreeMap::new();
            for (scenario, runs) in &results {
                let category = object_category(scenario.target_code()).unwrap_or("unknown").to_string();
                let cloth = scenario.tablecloth.to_string();
                let keys = [
                    ("all".to_string(), "all".to_string()),
                    (category.clone(), "all".to_string()),
                    ("all".to_string(), cloth.clone()),
                ];
                for key in keys {
                    let t = groups.entry(key).or_default();
                    for r in runs {
                        t.approach += r.metrics.approach as usize;
                        t.success += r.metrics.success as usize;
                        t.n += 1;
                    }
                }
            }
            for ((category, tablecloth), t) in groups {
                rows.push(MetricsRow {
                    policy: name.clone(),
                    set: set.name.clone(),
                    category,
                    tablecloth,
                    approach: t.approach as f64 / t.n.max(1) as f64,
                    success: t.success as f64 / t.n.max(1) as f64,
                    n: t.n,
                });
            }
        }
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("policy,set,category,tablecloth,approach,success,n\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{}",
            r.policy, r.set, r.category, r.tablecloth, r.approach, r.success, r.n
        );
    }
    out
}

/// Aligned plain-text table of the `all`/`all` rows, one per (policy, set).
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = format!("{:<16} {:<20} {:>8} {:>8} {:>6}\n", "policy", "set", "approach", "success", "n");
    for r in rows.iter().filter(|r| r.category == "all" && r.tablecloth == "all") {
        let _ = writeln!(out, "{:<16} {:<20} {:>8.3} {:>8.3} {:>6}", r.policy, r.set, r.approach, r.success, r.n);
    }
    out
}

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use subgoal_core::executor::policies::ActInput;
use subgoal_core::executor::rollout::{stop_statistic, waypoint_targets, Env};
use subgoal_core::executor::*;
use subgoal_core::milestone::{label_episode, LabelConfig, RuleAnnotator, SkillLibrary};
use subgoal_core::planner::{BeamConfig, PlanStep, UniformModel};
use subgoal_core::policy::{ActionChunk, CHUNK_DIM};
use subgoal_core::rng::{rng_from_seed, Rng};
use subgoal_core::toyworld::{gen_scenarios, render, scripted_expert, ScenarioDescriptor, ScenarioKind};

fn expert(s: &ScenarioDescriptor) -> (ExpertPolicy, Vec<PlanStep>) {
    let (episode, _) = scripted_expert(s).unwrap();
    let plan = label_episode(&episode, &LabelConfig::default(), &SkillLibrary::default(), &RuleAnnotator).unwrap();
    let steps = ground_truth_steps(&episode, &plan);
    (ExpertPolicy { episode, plan }, steps)
}

/// Counts calls to the wrapped policy.
struct Counting<'a, P>(&'a P, AtomicUsize);

impl<P: ChunkPolicy> ChunkPolicy for Counting<'_, P> {
    fn act(&self, input: &ActInput<'_>, rng: &mut Rng) -> Result<ActionChunk, ExecutorError> {
        self.1.fetch_add(1, Ordering::Relaxed);
        self.0.act(input, rng)
    }
}

/// Returns the same chunk every time.
struct Fixed(ActionChunk);

impl ChunkPolicy for Fixed {
    fn act(&self, _: &ActInput<'_>, _: &mut Rng) -> Result<ActionChunk, ExecutorError> {
        Ok(self.0)
    }
}

#[test]
fn alignment_compares_cell_fractions() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 0).unwrap()[0];
    let obs = render(&s.initial_state().unwrap());
    assert!(aligned(&obs, &obs, 0.0).unwrap());
    let mut other = obs.clone();
    for r in other.iter_mut() {
        for c in r.cells.iter_mut() {
            *c = (*c + 1) % 64;
        }
    }
    assert!(!aligned(&obs, &other, 0.999).unwrap());
    assert!(aligned(&obs, &other, 1.0).unwrap());
    let swapped = [obs[1].clone(), obs[0].clone()];
    assert!(matches!(aligned(&obs, &swapped, 0.5), Err(ExecutorError::ViewMismatch(..))));
}

#[test]
fn expert_goal_frames_align_with_their_goals() {
    for s in gen_scenarios(ScenarioKind::InDomain, 10, 1).unwrap() {
        let (ex, steps) = expert(&s);
        for (seg, step) in ex.plan.segments.iter().zip(&steps) {
            assert!(aligned(&ex.episode.rasters[seg.goal_frames[0]], &step.goal, 0.03).unwrap());
        }
    }
}

#[test]
fn the_expert_completes_every_stage() {
    let cfg = ExecutorConfig::default();
    for s in gen_scenarios(ScenarioKind::InDomain, 100, 2).unwrap() {
        let (ex, steps) = expert(&s);
        let r = run_task(&s, &PlanSource::GroundTruth(steps.clone()), &ex, &cfg, &mut rng_from_seed(0)).unwrap();
        assert!(r.metrics.success && r.metrics.approach, "scenario {}: {:?}", s.id, r.outcomes);
        assert_eq!(r.outcomes.len(), steps.len());
        assert!(r.outcomes.iter().all(|o| matches!(o, StageOutcome::Completed | StageOutcome::Stopped)));
        assert!(r.failure.is_none());
    }
}

#[test]
fn an_aligned_entry_completes_without_acting() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 3).unwrap()[0];
    let mut env = Env::new(s).unwrap();
    let step = PlanStep { stage_index: 0, subtask: "approach".into(), goal: env.observe() };
    let policy = Counting(&ZeroPolicy, AtomicUsize::new(0));
    let mut log = Vec::new();
    let out = run_stage(&mut env, &policy, &step, &ExecutorConfig::default(), &mut rng_from_seed(0), &mut log).unwrap();
    assert_eq!(out, StageOutcome::Completed);
    assert_eq!(env.steps(), 0);
    assert_eq!(policy.1.load(Ordering::Relaxed), 0);
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].switch_event, Some(SwitchCause::Aligned));
}

#[test]
fn the_zero_policy_stops_on_its_first_chunk() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 4).unwrap()[0];
    let (_, steps) = expert(s);
    let mut env = Env::new(s).unwrap();
    let policy = Counting(&ZeroPolicy, AtomicUsize::new(0));
    let mut log = Vec::new();
    let out = run_stage(&mut env, &policy, &steps[0], &ExecutorConfig::default(), &mut rng_from_seed(0), &mut log).unwrap();
    assert_eq!(out, StageOutcome::Stopped);
    assert_eq!(policy.1.load(Ordering::Relaxed), 1);
    assert_eq!(env.steps(), 0);
}

#[test]
fn budgets_time_out_and_cap_the_executed_steps() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 5).unwrap()[0];
    let (_, steps) = expert(s);
    let mut chunk = [0.0; CHUNK_DIM];
    for k in 0..30 {
        chunk[k * 4] = if k % 2 == 0 { 0.05 } else { -0.05 };
    }
    let cfg = ExecutorConfig { stage_budget: 25, ..Default::default() };
    let mut env = Env::new(s).unwrap();
    let policy = Counting(&Fixed(chunk), AtomicUsize::new(0));
    let mut log = Vec::new();
    let out = run_stage(&mut env, &policy, &steps[0], &cfg, &mut rng_from_seed(0), &mut log).unwrap();
    assert_eq!(out, StageOutcome::Timeout);
    assert_eq!(env.steps(), 25);
    assert_eq!(policy.1.load(Ordering::Relaxed), 3);
    assert_eq!(log.iter().filter(|r| r.action.is_some()).count(), 25);
}

#[test]
fn out_of_bound_actions_fail_the_rollout_when_not_clamped() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 6).unwrap()[0];
    let (_, steps) = expert(s);
    let cfg = ExecutorConfig { clamp_actions: false, ..Default::default() };
    let r = run_task(s, &PlanSource::GroundTruth(steps), &Fixed([0.5; CHUNK_DIM]), &cfg, &mut rng_from_seed(0)).unwrap();
    assert!(matches!(r.outcomes[0], StageOutcome::Failed(_)));
    assert!(r.failure.is_some());
    assert_eq!(r.steps, 0);
}

#[test]
fn empty_and_undecodable_plans_fail_the_task() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 7).unwrap()[0];
    let cfg = ExecutorConfig::default();
    let r = run_task(s, &PlanSource::GroundTruth(vec![]), &ZeroPolicy, &cfg, &mut rng_from_seed(0)).unwrap();
    assert_eq!(r.failure.as_deref(), Some("empty-plan"));
    assert_eq!(r.steps, 0);
    let model = UniformModel { vocab: 5 };
    let source = PlanSource::WorldModel { model: &model, beam: BeamConfig { width: 1, max_new_tokens: 4, parallel: false } };
    let r = run_task(s, &source, &ZeroPolicy, &cfg, &mut rng_from_seed(0)).unwrap();
    assert_eq!(r.failure.as_deref(), Some("plan-failed"));
    assert!(!r.metrics.success);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        ExecutorConfig { execute_steps: 31, ..Default::default() },
        ExecutorConfig { execute_steps: 0, ..Default::default() },
        ExecutorConfig { waypoint_offsets: vec![5, 12], ..Default::default() },
        ExecutorConfig { waypoint_offsets: vec![5, 5], ..Default::default() },
        ExecutorConfig { align_threshold: 1.5, ..Default::default() },
        ExecutorConfig { sampler_steps: 0, ..Default::default() },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    ExecutorConfig::default().validate().unwrap();
}

#[test]
fn stop_statistic_only_sees_the_executed_window() {
    let mut chunk = [0.0; CHUNK_DIM];
    chunk[0] = 0.04;
    assert!((stop_statistic(&chunk, 10) - 0.001).abs() < 1e-9);
    chunk[100] = 1.0;
    assert!((stop_statistic(&chunk, 10) - 0.001).abs() < 1e-9);
    assert_eq!(stop_statistic(&[0.0; CHUNK_DIM], 30), 0.0);
}

proptest! {
    #[test]
    fn waypoints_accumulate_the_chunk(
        chunk in proptest::collection::vec(-0.1f32..0.1, CHUNK_DIM),
        pose in proptest::array::uniform4(0.0f32..1.0),
    ) {
        let chunk: ActionChunk = chunk.try_into().unwrap();
        let targets = waypoint_targets(pose, &chunk, &[5, 10]);
        prop_assert_eq!(targets.len(), 2);
        for (target, w) in targets.iter().zip([5usize, 10]) {
            for d in 0..4 {
                let sum: f64 = (0..w).map(|k| chunk[k * 4 + d] as f64).sum::<f64>() + pose[d] as f64;
                prop_assert!((target[d] as f64 - sum).abs() <= 1e-5, "axis {} offset {}", d, w);
            }
        }
    }
}

#[test]
fn waypoint_mode_reaches_the_commanded_poses() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 8).unwrap()[0];
    let (_, steps) = expert(s);
    let mut chunk = [0.0; CHUNK_DIM];
    for k in 0..30 {
        chunk[k * 4] = 0.01;
        chunk[k * 4 + 1] = if k < 5 { -0.02 } else { 0.0 };
    }
    let cfg = ExecutorConfig {
        mode: ControlMode::Waypoint,
        stage_budget: 10,
        use_alignment: false,
        use_stop: false,
        ..Default::default()
    };
    let mut env = Env::new(s).unwrap();
    let start = env.state().proprio();
    let targets = waypoint_targets(start, &chunk, &cfg.waypoint_offsets);
    let mut log = Vec::new();
    run_stage(&mut env, &Fixed(chunk), &steps[0], &cfg, &mut rng_from_seed(0), &mut log).unwrap();
    let poses: Vec<[f32; 4]> = log.iter().filter(|r| r.action.is_some()).map(|r| r.pose).collect();
    assert_eq!(poses.len(), 10, "{:?}", log.last());
    for (pose, target) in [poses[4], poses[9]].iter().zip(&targets) {
        for d in 0..3 {
            assert!((pose[d] - target[d]).abs() < 1e-5, "{pose:?} vs {target:?}");
        }
    }
}

#[test]
fn logs_are_monotone_and_rollouts_deterministic() {
    let scenarios = gen_scenarios(ScenarioKind::Novel, 3, 9).unwrap();
    let mut noisy = [0.0; CHUNK_DIM];
    for (k, v) in noisy.iter_mut().enumerate() {
        *v = 0.01 * ((k * 7 % 5) as f32 - 2.0);
    }
    let cfg = ExecutorConfig { stage_budget: 40, ..Default::default() };
    for s in &scenarios {
        let (ex, steps) = expert(s);
        for policy in [&ex as &dyn ChunkPolicy, &Fixed(noisy)] {
            let source = PlanSource::GroundTruth(steps.clone());
            let a = run_task(s, &source, policy, &cfg, &mut rng_from_seed(1)).unwrap();
            let b = run_task(s, &source, policy, &cfg, &mut rng_from_seed(1)).unwrap();
            assert_eq!(a, b);
            assert!(a.log.windows(2).all(|w| w[0].stage <= w[1].stage && w[0].t <= w[1].t));
            assert_eq!(a.log.iter().filter(|r| r.switch_event.is_some()).count(), a.outcomes.len());
        }
    }
}

#[test]
fn execution_is_partial() {
    let s = &gen_scenarios(ScenarioKind::InDomain, 1, 10).unwrap()[0];
    let (_, steps) = expert(s);
    let mut chunk = [0.0; CHUNK_DIM];
    for k in 0..30 {
        chunk[k * 4] = if k % 2 == 0 { 0.02 } else { -0.02 };
    }
    for execute_steps in [1, 4, 10, 30] {
        let cfg =
            ExecutorConfig { execute_steps, waypoint_offsets: vec![1], stage_budget: 60, use_stop: false, ..Default::default() };
        let policy = Counting(&Fixed(chunk), AtomicUsize::new(0));
        let mut env = Env::new(s).unwrap();
        let mut log = Vec::new();
        run_stage(&mut env, &policy, &steps[0], &cfg, &mut rng_from_seed(0), &mut log).unwrap();
        let acted = log.iter().filter(|r| r.action.is_some()).count();
        assert_eq!(acted, 60, "execute_steps {execute_steps}: {:?}", log.last());
        assert_eq!(policy.1.load(Ordering::Relaxed), 60usize.div_ceil(execute_steps));
    }
}

#[test]
fn evaluation_scores_the_reference_policies() {
    let sets = vec![
        ScenarioSet { name: "in_domain".into(), scenarios: gen_scenarios(ScenarioKind::InDomain, 4, 11).unwrap() },
        ScenarioSet { name: "novel".into(), scenarios: gen_scenarios(ScenarioKind::Novel, 4, 12).unwrap() },
    ];
    let policies = vec![("expert".to_string(), EvalPolicy::Expert), ("zero".to_string(), EvalPolicy::Zero)];
    let cfg = EvalConfig { rollouts: 2, ..Default::default() };
    let rows = evaluate(&policies, &sets, None, &cfg).unwrap();
    for r in &rows {
        match r.policy.as_str() {
            "expert" => assert!(r.approach == 1.0 && r.success == 1.0, "{r:?}"),
            _ => assert_eq!(r.success, 0.0),
        }
    }
    let all: Vec<&MetricsRow> = rows.iter().filter(|r| r.category == "all" && r.tablecloth == "all").collect();
    assert_eq!(all.len(), 4);
    assert!(all.iter().all(|r| r.n == 8));
    assert!(rows.iter().any(|r| r.category != "all"));
    assert!(rows.iter().any(|r| r.tablecloth != "all"));
    let csv = metrics_csv(&rows);
    assert!(csv.starts_with("policy,set,category,tablecloth,approach,success,n\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
    assert!(metrics_table(&rows).contains("expert"));
    assert_eq!(evaluate(&policies, &sets, None, &cfg).unwrap(), rows);
}

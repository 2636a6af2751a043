use proptest::prelude::*;
use rand::Rng as _;
use subgoal_core::milestone::{label_episode, LabelConfig, MilestonePlan, RuleAnnotator, SkillLibrary};
use subgoal_core::nn::{get_param, set_param, Parameters};
use subgoal_core::policy::augment::OVERLAP_WINDOW;
use subgoal_core::policy::dataset::{decode_dataset, encode_dataset};
use subgoal_core::policy::flow::integrate;
use subgoal_core::policy::*;
use subgoal_core::rng::rng_from_seed;
use subgoal_core::toyworld::{gen_scenarios, scripted_expert, Episode, ScenarioKind};

fn corpus(n: usize, seed: u64) -> Vec<(Episode, MilestonePlan)> {
    gen_scenarios(ScenarioKind::InDomain, n, seed)
        .unwrap()
        .iter()
        .map(|s| {
            let (ep, _) = scripted_expert(s).unwrap();
            let plan = label_episode(&ep, &LabelConfig::default(), &SkillLibrary::default(), &RuleAnnotator).unwrap();
            (ep, plan)
        })
        .collect()
}

fn random_cond(rng: &mut subgoal_core::rng::Rng) -> Conditioning {
    Conditioning {
        obs: (0..OBS_WIDTH).map(|_| rng.random_range(0.0..1.0)).collect(),
        goal: (0..OBS_WIDTH).map(|_| rng.random_range(0.0..1.0)).collect(),
        subtask: vec![rng.random_range(16..40), rng.random_range(16..40)],
        proprio: [0.3, 0.6, 0.2, 1.0],
    }
}

struct Constant(Vec<f32>);

impl VelocityField for Constant {
    fn velocity(&self, _: &[f32], _: &Conditioning, _: f32) -> Vec<f32> {
        self.0.clone()
    }
}

#[test]
fn interpolant_endpoints_are_noise_and_data() {
    let mut rng = rng_from_seed(1);
    for _ in 0..10_000 {
        let a: ActionChunk = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let z = flow::standard_normal_chunk(&mut rng);
        let at0 = FlowSample::at(&a, z, 0.0, Conditioning::default());
        let at1 = FlowSample::at(&a, z, 1.0, Conditioning::default());
        assert_eq!(at0.x, z);
        assert_eq!(at1.x, a);
    }
}

#[test]
fn euler_recovers_a_constant_velocity() {
    let mut rng = rng_from_seed(2);
    let v: Vec<f32> = (0..CHUNK_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
    let z = flow::standard_normal_chunk(&mut rng);
    for steps in [1, 5, 10] {
        let out = integrate(&Constant(v.clone()), &Conditioning::default(), &z, steps).unwrap();
        for i in 0..CHUNK_DIM {
            assert!((out[i] - (z[i] + v[i])).abs() <= 1e-6, "steps {steps} entry {i}");
        }
    }
    assert!(integrate(&Constant(v), &Conditioning::default(), &z, 0).is_err());
}

#[test]
fn zero_predictor_loss_is_the_chunk_width() {
    // With a = 0 the target is −z, so E‖0 − v‖² = E‖z‖² = 120.
    let mut rng = rng_from_seed(3);
    let n = 10_000;
    let mut total = 0.0f64;
    for _ in 0..n {
        let s = make_flow_sample(&[0.0; CHUNK_DIM], Conditioning::default(), &mut rng).unwrap();
        total += s.v.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    }
    let loss = total / n as f64;
    assert!((loss - 120.0).abs() <= 0.05 * 120.0, "loss {loss}");
}

#[test]
fn non_finite_chunks_are_rejected() {
    let mut a = [0.0; CHUNK_DIM];
    a[7] = f32::NAN;
    assert!(matches!(
        make_flow_sample(&a, Conditioning::default(), &mut rng_from_seed(0)),
        Err(PolicyError::NonFiniteInput { index: 7 })
    ));
}

fn check_gradients(weighting: LossWeighting, seed: u64) {
    let cfg = PolicyConfig { hidden: vec![12, 10], ..Default::default() };
    let mut rng = rng_from_seed(seed);
    let p: FlowPolicy<f64> = FlowPolicy::<f32>::init(&cfg, &mut rng).unwrap().cast();
    let conds: Vec<Conditioning> = (0..3).map(|_| random_cond(&mut rng)).collect();
    let flows: Vec<FlowSample> = (0..3)
        .map(|_| {
            let a: ActionChunk = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let mut s = make_flow_sample(&a, Conditioning::default(), &mut rng).unwrap();
            s.tau = s.tau.min(0.9);
            FlowSample::at(&a, s.z, s.tau, Conditioning::default())
        })
        .collect();
    let xs: Vec<&[f32]> = flows.iter().map(|f| &f.x[..]).collect();
    let cs: Vec<&Conditioning> = conds.iter().collect();
    let taus: Vec<f32> = flows.iter().map(|f| f.tau).collect();
    let vs: Vec<&[f32]> = flows.iter().map(|f| &f.v[..]).collect();
    let loss = |m: &FlowPolicy<f64>| m.loss_and_grad(&xs, &cs, &taus, &vs, weighting).unwrap().0;
    let (_, grad) = p.loss_and_grad(&xs, &cs, &taus, &vs, weighting).unwrap();
    // Half the probes hit the embedding rows of the subtask tokens, which are
    // the only embedding entries with a nonzero gradient.
    let n = p.parameter_count();
    let emb_cols = p.embedding.ncols();
    let mut picks: Vec<usize> = (0..25).map(|_| rng.random_range(p.embedding.len()..n)).collect();
    for c in &conds {
        for &t in &c.subtask {
            picks.push(t as usize * emb_cols + rng.random_range(0..emb_cols));
        }
    }
    while picks.len() < 50 {
        picks.push(rng.random_range(p.embedding.len()..n));
    }
    let h = 1e-3;
    let mut worst = 0.0f64;
    for &i in &picks {
        let mut q = p.clone();
        let v = get_param(&q, i);
        set_param(&mut q, i, v + h);
        let up = loss(&q);
        set_param(&mut q, i, v - h);
        let down = loss(&q);
        let fd = (up - down) / (2.0 * h);
        let an = get_param(&grad, i);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-4, "{weighting:?}: worst relative error {worst}");
}

#[test]
fn flow_policy_gradients_match_central_differences() {
    check_gradients(LossWeighting::Velocity, 5);
    check_gradients(LossWeighting::Chunk, 6);
}

#[test]
fn flow_loss_averages_the_velocity_error() {
    let mut rng = rng_from_seed(8);
    let p = FlowPolicy::<f64>::init(&PolicyConfig { hidden: vec![8], ..Default::default() }, &mut rng).unwrap();
    let samples: Vec<FlowSample> =
        (0..4).map(|_| make_flow_sample(&[0.1; CHUNK_DIM], random_cond(&mut rng), &mut rng).unwrap()).collect();
    let (mean, _) = flow_loss(&p, &samples).unwrap();
    let direct: f64 = samples
        .iter()
        .map(|s| {
            let v = p.velocity(&s.x, &s.cond, s.tau);
            v.iter().zip(&s.v).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / 4.0;
    assert!((mean - direct).abs() <= 1e-4 * direct, "{mean} vs {direct}");
    assert!(matches!(flow_loss(&p, &[]), Err(PolicyError::EmptyDataset)));
}

proptest! {
    #[test]
    fn padded_tails_are_zero_and_padding_is_idempotent(
        raw in proptest::collection::vec(-1.0f32..1.0, CHUNK_DIM),
        boundary in 0usize..80,
        back in 0usize..80,
    ) {
        let raw: ActionChunk = raw.try_into().unwrap();
        let t = boundary.saturating_sub(back);
        let once = pad_chunk(&raw, t, boundary).unwrap();
        let keep = ((boundary - t) * ACTION_DIM).min(CHUNK_DIM);
        prop_assert!(once[keep..].iter().all(|v| v.to_bits() == 0));
        prop_assert_eq!(&once[..keep], &raw[..keep]);
        prop_assert_eq!(pad_chunk(&once, t, boundary).unwrap(), once);
        prop_assert!(pad_chunk(&raw, boundary + 1, boundary).is_err());
    }
}

#[test]
fn offset_goals_stay_within_the_window() {
    let (ep, plan) = corpus(1, 4).remove(0);
    let mut rng = rng_from_seed(9);
    for _ in 0..10_000 {
        let stage = rng.random_range(0..plan.len());
        let seg = &plan.segments[stage];
        let t = rng.random_range(seg.from..=seg.to);
        let choice = offset_goal(t, stage, &plan, OVERLAP_WINDOW, &mut rng).unwrap();
        let boundary = plan.segments[choice.stage].to;
        for f in choice.goal_frames {
            assert!(f.abs_diff(boundary) <= OVERLAP_WINDOW, "goal frame {f} vs boundary {boundary}");
            assert!(f < ep.len());
        }
        assert!(choice.stage == stage || choice.stage == stage + 1);
    }
    assert!(offset_goal(0, plan.len(), &plan, OVERLAP_WINDOW, &mut rng).is_err());
}

#[test]
fn relabel_frequency_at_the_boundary_is_one_half() {
    let (_, plan) = corpus(1, 4).remove(0);
    let b = plan.segments[0].to;
    let mut rng = rng_from_seed(10);
    let n = 10_000;
    let relabeled = (0..n).filter(|_| offset_goal(b, 0, &plan, OVERLAP_WINDOW, &mut rng).unwrap().relabeled(0)).count();
    let freq = relabeled as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
}

#[test]
fn dataset_has_one_sample_per_frame() {
    let eps = corpus(4, 12);
    let data = build_dataset(&eps, &DatasetConfig { window: 0, seed: 1 }).unwrap();
    assert_eq!(data.len(), eps.iter().map(|(e, _)| e.len()).sum::<usize>());
    for s in &data {
        let (ep, plan) = &eps[s.episode as usize];
        let t = s.frame as usize;
        let seg = &plan.segments[s.stage as usize];
        assert!(t <= seg.to);
        // Without a window the goal is exactly the stage's boundary frame.
        let goal: Vec<u8> = [0, 1].iter().flat_map(|&v| ep.rasters[seg.goal_frames[v]][v].cells.clone()).collect();
        assert_eq!(s.goal, goal);
        assert_eq!(s.obs.len(), PAIR_CELLS);
        let keep = ((seg.to - t) * ACTION_DIM).min(CHUNK_DIM);
        assert!(s.chunk[keep..].iter().all(|v| v.to_bits() == 0));
    }
    // Each inner boundary frame may close its stage with the stop chunk.
    assert!(data.iter().any(|s| {
        let plan = &eps[s.episode as usize].1;
        s.frame as usize == plan.segments[0].to && s.stage == 0 && s.chunk.iter().all(|&v| v == 0.0)
    }));
}

#[test]
fn dataset_cache_round_trips() {
    let data = build_dataset(&corpus(2, 13), &DatasetConfig::default()).unwrap();
    let bytes = encode_dataset(&data).unwrap();
    assert_eq!(decode_dataset(&bytes).unwrap(), data);
    assert!(decode_dataset(&bytes[..bytes.len() - 4]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_dataset(&bad).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.bin");
    write_dataset(&path, &data).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), data);
}

fn small_policy(seed: u64) -> FlowPolicy<f32> {
    FlowPolicy::init(&PolicyConfig { hidden: vec![32, 32], ..Default::default() }, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn training_is_deterministic_and_order_invariant() {
    let data = build_dataset(&corpus(2, 14), &DatasetConfig::default()).unwrap();
    let cfg = PolicyTrainConfig { steps: 20, batch: 8, seed: 3, ..Default::default() };
    let run = |cfg: &PolicyTrainConfig| {
        let mut p = small_policy(1);
        (train_policy(&mut p, &data, cfg).unwrap().losses, p)
    };
    let (a, pa) = run(&cfg);
    let (b, pb) = run(&cfg);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let (c, pc) = run(&PolicyTrainConfig { shards: 3, ..cfg.clone() });
    let (d, pd) = run(&PolicyTrainConfig { shards: 3, ..cfg.clone() });
    assert_eq!(c, d);
    assert_eq!(pc, pd);

    // Moving samples around while keeping batch contents fixed changes nothing.
    let mut rng = rng_from_seed(4);
    let batches: Vec<Vec<usize>> = (0..10).map(|_| (0..8).map(|_| rng.random_range(0..data.len())).collect()).collect();
    let perm: Vec<usize> = (0..data.len()).rev().collect();
    let shuffled: Vec<PolicySample> = perm.iter().map(|&i| data[i].clone()).collect();
    let position = |i: usize| perm.iter().position(|&j| j == i).unwrap();
    let moved: Vec<Vec<usize>> = batches.iter().map(|b| b.iter().map(|&i| position(i)).collect()).collect();
    let mut p1 = small_policy(2);
    let mut p2 = small_policy(2);
    let l1 = train_on_batches(&mut p1, &data, &batches, &cfg).unwrap().losses;
    let l2 = train_on_batches(&mut p2, &shuffled, &moved, &cfg).unwrap().losses;
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
}

#[test]
fn a_single_sample_is_memorized() {
    let data = build_dataset(&corpus(1, 15), &DatasetConfig::default()).unwrap();
    let one = vec![data[3].clone()];
    let mut p = small_policy(3);
    let cfg = PolicyTrainConfig { steps: 5000, batch: 16, seed: 5, ..Default::default() };
    let losses = train_policy(&mut p, &one, &cfg).unwrap().losses;
    let tail = losses[losses.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(tail < 1e-3, "final loss {tail}");
    let chunk = sample_chunk(&p, &one[0].conditioning(), 10, &mut rng_from_seed(6)).unwrap();
    for (got, want) in chunk.iter().zip(&one[0].chunk) {
        assert!((got * p.action_scale - want).abs() < 0.01, "{got} vs {want}");
    }
}

#[test]
fn empty_datasets_and_bad_configs_are_rejected() {
    let mut p = small_policy(0);
    assert!(matches!(train_policy(&mut p, &[], &PolicyTrainConfig::default()), Err(PolicyError::EmptyDataset)));
    let data = build_dataset(&corpus(1, 16), &DatasetConfig::default()).unwrap();
    let cfg = PolicyTrainConfig { batch: 0, ..Default::default() };
    assert!(matches!(train_policy(&mut p, &data, &cfg), Err(PolicyError::InvalidConfig(_))));
    assert!(FlowPolicy::<f32>::init(&PolicyConfig { hidden: vec![], ..Default::default() }, &mut rng_from_seed(0)).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_the_policy() {
    use subgoal_core::checkpoint::Checkpoint;
    let p = FlowPolicy::<f32>::init(&PolicyConfig { hidden: vec![6, 5], no_goal: true, ..Default::default() }, &mut rng_from_seed(7))
        .unwrap();
    let back = FlowPolicy::from_checkpoint(&Checkpoint::decode(&p.to_checkpoint().encode()).unwrap()).unwrap();
    assert_eq!(back, p);
}

#[test]
fn no_goal_policies_ignore_the_goal() {
    let p = FlowPolicy::<f32>::init(&PolicyConfig { hidden: vec![8], no_goal: true, ..Default::default() }, &mut rng_from_seed(1))
        .unwrap();
    let mut rng = rng_from_seed(2);
    let a = random_cond(&mut rng);
    let mut b = a.clone();
    b.goal = vec![0.0; OBS_WIDTH];
    let x = flow::standard_normal_chunk(&mut rng);
    assert_eq!(p.velocity(&x, &a, 0.3), p.velocity(&x, &b, 0.3));
}

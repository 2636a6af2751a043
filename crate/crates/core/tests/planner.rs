use subgoal_core::codec::vocab::VOCAB_SIZE;
use subgoal_core::codec::{assemble, pack_episode, validate, TokenSequence};
use subgoal_core::milestone::{label_episode, LabelConfig, MilestonePlan, RuleAnnotator, SkillLibrary};
use subgoal_core::planner::*;
use subgoal_core::rng::rng_from_seed;
use subgoal_core::toyworld::{gen_scenarios, scripted_expert, Episode, ScenarioKind};

fn expert_corpus(n: usize, seed: u64) -> Vec<(Episode, MilestonePlan)> {
    let lib = SkillLibrary::default();
    gen_scenarios(ScenarioKind::InDomain, n, seed)
        .unwrap()
        .iter()
        .map(|s| {
            let (ep, _) = scripted_expert(s).unwrap();
            let plan = label_episode(&ep, &LabelConfig::default(), &lib, &RuleAnnotator).unwrap();
            (ep, plan)
        })
        .collect()
}

/// Model defined by an explicit table of next-token distributions.
struct Table(Vec<(Vec<u32>, Vec<f64>)>, usize);

impl NextTokenModel for Table {
    fn vocab_size(&self) -> usize {
        self.1
    }
    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        self.0.iter().find(|(h, _)| h == history).map(|(_, p)| p.clone()).unwrap_or_else(|| {
            let mut p = vec![0.0; self.1];
            p[self.1 - 1] = 1.0;
            p
        })
    }
}

#[test]
fn greedy_and_beam_disagree_on_the_constructed_example() {
    // Tokens A=0, B=1, C=2, EOS=3.
    let m = Table(
        vec![
            (vec![], vec![0.6, 0.4, 0.0, 0.0]),
            (vec![0], vec![0.3, 0.25, 0.25, 0.2]),
            (vec![1], vec![0.9, 0.05, 0.05, 0.0]),
        ],
        4,
    );
    let free = Constraint::Free { end: 3 };
    let greedy = beam_search_with(&m, &[], &BeamConfig { width: 1, max_new_tokens: 5, parallel: false }, free).unwrap();
    let beam = beam_search_with(&m, &[], &BeamConfig { width: 2, max_new_tokens: 5, parallel: false }, free).unwrap();
    assert_eq!(greedy.tokens, vec![0, 0, 3]);
    assert!((greedy.log_prob.exp() - 0.18).abs() < 1e-12);
    assert_eq!(beam.tokens, vec![1, 0, 3]);
    assert!((beam.log_prob.exp() - 0.36).abs() < 1e-12);
}

#[test]
fn unfinished_search_reports_the_best_candidate() {
    let m = UniformModel { vocab: 3 };
    let err = beam_search_with(&m, &[], &BeamConfig { width: 2, max_new_tokens: 0, parallel: false }, Constraint::Free { end: 2 });
    assert!(matches!(err, Err(PlannerError::Unfinished { .. })));
    let m = Table((0..3).map(|n| (vec![0; n], vec![1.0, 0.0])).collect(), 2);
    match beam_search_with(&m, &[], &BeamConfig { width: 1, max_new_tokens: 3, parallel: false }, Constraint::Free { end: 1 }) {
        Err(PlannerError::Unfinished { best, .. }) => assert_eq!(best, vec![0, 0, 0]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn uniform_model_loss_is_log_vocab() {
    let (ep, plan) = expert_corpus(1, 3).remove(0);
    let seq = assemble(&ep, &plan, 0, 0).unwrap();
    let loss = ce_loss(&UniformModel { vocab: VOCAB_SIZE as usize }, &seq).unwrap();
    assert!((loss - (VOCAB_SIZE as f64).ln()).abs() < 1e-12);
    assert!((loss - 7.663).abs() < 1e-3);
}

#[test]
fn count_model_loss_equals_empirical_conditional_entropy() {
    let corpus = expert_corpus(4, 8);
    let seqs: Vec<TokenSequence> = corpus.iter().map(|(e, p)| assemble(e, p, 0, 0).unwrap()).collect();
    let mut m = CountModel::new(VOCAB_SIZE as usize, Some(4), 0.0).unwrap();
    m.fit(seqs.iter().map(|s| (s.tokens(), s.context_len()))).unwrap();
    let tokens: usize = seqs.iter().map(|s| s.len() - s.context_len()).sum();
    let weighted: f64 = seqs.iter().map(|s| ce_loss(&m, s).unwrap() * (s.len() - s.context_len()) as f64).sum();
    // H = -(1/N) sum over contexts and next tokens of n * ln(n / n_ctx).
    let mut entropy = 0.0;
    for counts in m.contexts() {
        let total: u64 = counts.values().sum();
        for &n in counts.values() {
            entropy -= n as f64 * (n as f64 / total as f64).ln();
        }
    }
    entropy /= tokens as f64;
    assert!((weighted / tokens as f64 - entropy).abs() < 1e-9, "{} vs {entropy}", weighted / tokens as f64);
}

#[test]
fn count_model_decodes_its_training_sequences() {
    let corpus = expert_corpus(6, 21);
    let mut rng = rng_from_seed(2);
    let seqs: Vec<TokenSequence> =
        corpus.iter().flat_map(|(e, p)| pack_episode(e, p, 1, &mut rng).unwrap()).map(|(_, s)| s).collect();
    let mut m = CountModel::new(VOCAB_SIZE as usize, None, 0.0).unwrap();
    m.fit(seqs.iter().map(|s| (s.tokens(), s.context_len()))).unwrap();
    for s in &seqs {
        let prefix = &s.tokens()[..s.context_len()];
        let out = beam_search(&m, prefix, &BeamConfig { width: 1, ..Default::default() }).unwrap();
        assert_eq!(out.tokens, s.tokens());
        validate(&out.tokens).unwrap();
        let wide = beam_search(&m, prefix, &BeamConfig { width: 3, ..Default::default() }).unwrap();
        validate(&wide.tokens).unwrap();
    }
}

#[test]
fn decode_plan_inverts_assembly() {
    let (ep, plan) = expert_corpus(1, 5).remove(0);
    let last = plan.len() - 1;
    for start in [0, last] {
        let seq = assemble(&ep, &plan, 0, start).unwrap();
        let steps = decode_plan(&seq, start).unwrap();
        assert_eq!(steps.len(), plan.len() - start);
        for (step, seg) in steps.iter().zip(&plan.segments[start..]) {
            assert_eq!(step.subtask, subgoal_core::codec::normalize(&seg.subtask));
            assert_eq!(step.goal[0], ep.rasters[seg.goal_frames[0]][0]);
            assert_eq!(step.goal[1], ep.rasters[seg.goal_frames[1]][1]);
        }
        assert_eq!(steps[0].stage_index, start);
    }
    let ctx = subgoal_core::codec::context_tokens(&ep.rasters[0], &plan.instruction);
    let mut bare = ctx.clone();
    bare.push(subgoal_core::codec::vocab::SEQ_END);
    assert!(decode_plan(&TokenSequence::new(bare).unwrap(), 0).unwrap().is_empty());
}

#[test]
fn context_mlp_memorizes_a_repeated_sequence() {
    let mut rng = rng_from_seed(11);
    let seq: Vec<u32> = (0..120).map(|i| [16u32, 17, 18, 2064, 2065, 3, 2][(i * 7 + i / 5) % 7]).collect();
    let mut m = ContextMlp::<f32>::init(&MlpConfig::default(), VOCAB_SIZE as usize, &mut rng).unwrap();
    let cfg = TrainConfig { steps: 2000, batch: 16, seed: 4, ..Default::default() };
    let report = train_context_mlp(&mut m, &[(&seq[..], 0)], &cfg).unwrap();
    let (loss, _) = m.evaluate(&[(&seq[..], 0)], 128);
    assert!(loss < 0.1, "loss {loss}");
    assert!(report.losses.last().unwrap() < &report.losses[0]);
}

#[test]
fn context_mlp_training_is_reproducible() {
    let seq: Vec<u32> = (0..60).map(|i| 16 + (i * i % 13) as u32).collect();
    let run = |shards| {
        let mut m = ContextMlp::<f32>::init(
            &MlpConfig { context: 8, embedding_dim: 4, hidden: vec![16, 16] },
            VOCAB_SIZE as usize,
            &mut rng_from_seed(1),
        )
        .unwrap();
        let cfg = TrainConfig { steps: 30, batch: 8, seed: 2, shards, ..Default::default() };
        (train_context_mlp(&mut m, &[(&seq[..], 4)], &cfg).unwrap().losses, m)
    };
    let (a, ma) = run(1);
    let (b, mb) = run(1);
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    let (c, _) = run(4);
    let (d, _) = run(4);
    assert_eq!(c, d);
    assert!(a.last().unwrap() < &a[0]);
}

/// Pseudo-random next-token distributions keyed on the history. The last
/// token ends the sequence and its share grows with the history length.
struct Hashed {
    vocab: usize,
    salt: u64,
}

impl NextTokenModel for Hashed {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        let mut h = self.salt ^ 0x9e37_79b9_7f4a_7c15;
        for &t in history {
            h = (h ^ t as u64).wrapping_mul(0x100_0000_01b3);
        }
        let mut w: Vec<f64> = (0..self.vocab)
            .map(|i| {
                let x = (h ^ (i as u64 + 1)).wrapping_mul(0x2545_f491_4f6c_dd1d);
                ((x >> 11) as f64 / (1u64 << 53) as f64) + 1e-3
            })
            .collect();
        let rest: f64 = w[..self.vocab - 1].iter().sum();
        w[self.vocab - 1] = rest * (history.len() as f64 + 1.0) / 4.0;
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }
}

mod search_properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reported_score_matches_the_model(vocab in 2usize..6, salt in any::<u64>(), width in 1usize..5, prefix in prop::collection::vec(0u32..1, 0..3)) {
            let m = Hashed { vocab, salt };
            let end = vocab as u32 - 1;
            let cfg = BeamConfig { width, max_new_tokens: 64, parallel: false };
            let h = beam_search_with(&m, &prefix, &cfg, Constraint::Free { end }).unwrap();
            prop_assert!(h.finished);
            prop_assert_eq!(&h.tokens[..prefix.len()], &prefix[..]);
            let tail = &h.tokens[prefix.len()..];
            prop_assert_eq!(tail.last(), Some(&end));
            prop_assert!(!tail[..tail.len() - 1].contains(&end));
            let mut lp = 0.0;
            for i in prefix.len()..h.tokens.len() {
                lp += m.next_distribution(&h.tokens[..i])[h.tokens[i] as usize].ln();
            }
            prop_assert!((lp - h.log_prob).abs() < 1e-9);
        }

        #[test]
        fn width_one_is_stepwise_argmax(vocab in 2usize..6, salt in any::<u64>()) {
            let m = Hashed { vocab, salt };
            let end = vocab as u32 - 1;
            let cfg = BeamConfig { width: 1, max_new_tokens: 64, parallel: false };
            let h = beam_search_with(&m, &[], &cfg, Constraint::Free { end }).unwrap();
            let mut tokens = Vec::new();
            while tokens.last() != Some(&end) {
                let p = m.next_distribution(&tokens);
                let best = (0..vocab).max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a))).unwrap();
                tokens.push(best as u32);
            }
            prop_assert_eq!(h.tokens, tokens);
        }

        #[test]
        fn parallel_expansion_changes_nothing(vocab in 2usize..6, salt in any::<u64>(), width in 1usize..6) {
            let m = Hashed { vocab, salt };
            let free = Constraint::Free { end: vocab as u32 - 1 };
            let a = beam_search_with(&m, &[], &BeamConfig { width, max_new_tokens: 64, parallel: false }, free).unwrap();
            let b = beam_search_with(&m, &[], &BeamConfig { width, max_new_tokens: 64, parallel: true }, free).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

use proptest::prelude::*;
use subgoal_core::codec::*;
use subgoal_core::milestone::{label_episode, LabelConfig, MilestonePlan, RuleAnnotator, SkillLibrary};
use subgoal_core::rng::rng_from_seed;
use subgoal_core::toyworld::{gen_scenarios, scripted_expert, Episode, Raster, ScenarioKind, View, RASTER_CELLS};

fn labeled(seed: u64) -> (Episode, MilestonePlan) {
    let s = gen_scenarios(ScenarioKind::UnseenTarget, 1, seed).unwrap().remove(0);
    let (ep, _) = scripted_expert(&s).unwrap();
    let plan = label_episode(&ep, &LabelConfig::default(), &SkillLibrary::default(), &RuleAnnotator).unwrap();
    (ep, plan)
}

#[test]
fn assembled_sequences_parse_back_to_their_parts() {
    let (ep, plan) = labeled(3);
    for stage in 0..plan.len() {
        let frame = plan.segments[stage].from;
        let seq = assemble(&ep, &plan, frame, stage).unwrap();
        validate(seq.tokens()).unwrap();
        let parsed = parse(seq.tokens()).unwrap();
        assert_eq!(parsed.context, ep.rasters[frame]);
        assert_eq!(detokenize_text(&parsed.instruction).unwrap(), normalize(&plan.instruction));
        assert_eq!(parsed.stages.len(), plan.len() - stage);
        for ((text, goal), seg) in parsed.stages.iter().zip(&plan.segments[stage..]) {
            assert_eq!(detokenize_text(text).unwrap(), normalize(&seg.subtask));
            assert_eq!(goal[0], ep.rasters[seg.goal_frames[0]][0]);
            assert_eq!(goal[1], ep.rasters[seg.goal_frames[1]][1]);
        }
        assert_eq!(seq.stage_ends().len(), plan.len() - stage);
    }
    assert!(assemble(&ep, &plan, 0, plan.len()).is_err());
    assert!(assemble(&ep, &plan, ep.len(), 0).is_err());
}

#[test]
fn packed_windows_start_at_the_episode_and_match_their_stage() {
    let (ep, plan) = labeled(6);
    let mut rng = rng_from_seed(5);
    let packed = pack_episode(&ep, &plan, 30, &mut rng).unwrap();
    assert_eq!(packed.len(), 31);
    assert_eq!(packed[0].0, Window { start_frame: 0, start_stage: 0 });
    for (w, seq) in &packed {
        assert_eq!(w.start_stage, plan.stage_of(w.start_frame));
        assert_eq!(parse(seq.tokens()).unwrap().context, ep.rasters[w.start_frame]);
    }
}

#[test]
fn sequence_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_from_seed(1);
    let seqs: Vec<TokenSequence> = (0..4)
        .flat_map(|i| {
            let (ep, plan) = labeled(i);
            pack_episode(&ep, &plan, 2, &mut rng).unwrap().into_iter().map(|(_, s)| s)
        })
        .collect();
    let path = dir.path().join("s.vstq");
    write_sequences(&path, &seqs).unwrap();
    assert_eq!(read_sequences(&path).unwrap(), seqs);

    let bytes = encode_sequences(&seqs);
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_sequences(&extra), Err(CodecError::TrailingBytes { .. })));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_sequences(&magic), Err(CodecError::BadMagic)));
    let mut version = bytes;
    version[4] = 9;
    assert!(matches!(decode_sequences(&version), Err(CodecError::UnsupportedVersion(9))));
    assert!(matches!(read_sequences(&dir.path().join("absent")), Err(CodecError::Io(_))));
}

#[test]
fn corrupt_tokens_are_located() {
    let (ep, plan) = labeled(2);
    let seq = assemble(&ep, &plan, 0, 0).unwrap();
    let mut tokens = seq.into_tokens();
    let n = tokens.len();
    tokens.truncate(n - 1);
    assert!(validate(&tokens).is_err());
    assert!(TokenSequence::new(tokens).is_err());
}

fn raster() -> impl Strategy<Value = Raster> {
    let codes: Vec<u8> = (0..=u8::MAX).filter(|&c| subgoal_core::toyworld::render::is_declared_code(c)).collect();
    prop::collection::vec(prop::sample::select(codes), RASTER_CELLS)
        .prop_map(|cells| Raster::from_cells(View::Head, &cells).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn text_round_trips_after_normalization(s in "[ -~]{0,60}") {
        let ids = tokenize_text(&s);
        prop_assert_eq!(detokenize_text(&ids).unwrap(), normalize(&s));
        prop_assert_eq!(normalize(&normalize(&s)), normalize(&s));
    }

    #[test]
    fn rasters_round_trip(r in raster()) {
        let ids = tokenize_raster(&r);
        prop_assert_eq!(detokenize_raster(&ids, View::Head).unwrap(), r);
    }

    #[test]
    fn truncated_files_never_decode(seed in 0u64..6, cut in 1usize..64) {
        let (ep, plan) = labeled(seed);
        let bytes = encode_sequences(&[assemble(&ep, &plan, 0, 0).unwrap()]);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_sequences(&bytes[..bytes.len() - cut]).is_err());
    }
}

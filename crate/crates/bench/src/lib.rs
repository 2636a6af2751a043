//! Shared fixtures for the pipeline benchmarks.

use subgoal_core::codec::{pack_episode, TokenSequence};
use subgoal_core::milestone::{label_episode, LabelConfig, MilestonePlan, RuleAnnotator, SkillLibrary};
use subgoal_core::planner::CountModel;
use subgoal_core::policy::{FlowPolicy, PolicyConfig};
use subgoal_core::rng::rng_from_seed;
use subgoal_core::toyworld::{gen_scenarios, scripted_expert, Episode, ScenarioKind};

/// Labeled in-domain demonstrations.
pub fn labeled_corpus(n: usize, seed: u64) -> Vec<(Episode, MilestonePlan)> {
    let lib = SkillLibrary::default();
    gen_scenarios(ScenarioKind::InDomain, n, seed)
        .expect("valid scenario request")
        .iter()
        .map(|s| {
            let (ep, _) = scripted_expert(s).expect("expert solves in-domain scenarios");
            let plan = label_episode(&ep, &LabelConfig::default(), &lib, &RuleAnnotator).expect("labels");
            (ep, plan)
        })
        .collect()
}

/// Episode-start sequences plus `samples` random windows per episode.
pub fn packed(corpus: &[(Episode, MilestonePlan)], samples: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = rng_from_seed(seed);
    corpus
        .iter()
        .flat_map(|(ep, plan)| pack_episode(ep, plan, samples, &mut rng).expect("packs"))
        .map(|(_, s)| s)
        .collect()
}

/// Unsmoothed full-history count model over `sequences`.
pub fn fitted_count_model(sequences: &[TokenSequence]) -> CountModel {
    let mut m = CountModel::new(subgoal_core::codec::VOCAB_SIZE as usize, None, 0.0).expect("valid model");
    m.fit(sequences.iter().map(|s| (s.tokens(), s.context_len()))).expect("fits");
    m
}

pub fn policy(hidden: Vec<usize>, seed: u64) -> FlowPolicy<f32> {
    let cfg = PolicyConfig { hidden, ..Default::default() };
    FlowPolicy::init(&cfg, &mut rng_from_seed(seed)).expect("valid policy config")
}

//! One function per subcommand. Each validates its inputs before doing any
//! work, writes the resolved configuration into its output directory and
//! returns a one-line JSON summary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use subgoal_core::checkpoint::Checkpoint;
use subgoal_core::codec::{assemble, context_tokens, pack_episode, read_sequences, write_sequences, TokenSequence, VOCAB_SIZE};
use subgoal_core::executor::{
    evaluate, ground_truth_steps, metrics_csv, metrics_table, run_task, ChunkPolicy, EvalConfig, EvalPolicy, ExpertPolicy,
    PlanSource, ScenarioSet, ZeroPolicy,
};
use subgoal_core::milestone::{label_episode, MilestonePlan, RemoteAnnotator, RuleAnnotator, SkillLibrary};
use subgoal_core::planner::{self, beam_search, decode_plan, ce_loss, ContextMlp, CountModel, NextTokenModel};
use subgoal_core::policy::{build_dataset, read_dataset, train_policy, DatasetConfig, FlowPolicy, PolicySample};
use subgoal_core::rng::{derived_rng, rng_from_seed};
use subgoal_core::toyworld::{gen_scenarios, scripted_expert, scripted_expert_with, Episode, ScenarioDescriptor, ScenarioKind};

use crate::config::{stream, AnnotatorKind, PlannerKind, RunConfig, SetSpec};
use crate::error::{CliError, CliResult, OrInvalid, OrRuntime};
use crate::io;

pub const EPISODE_PREFIX: &str = "episode_";
pub const SEQUENCES_FILE: &str = "sequences.vstq";
pub const MODEL_FILE: &str = "model.ckpt";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const CURVE_FILE: &str = "curve.csv";

fn curve_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

fn start(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    cfg.validate()?;
    io::ensure_dir(out)?;
    cfg.write_resolved(out)
}

fn plan_of(ep: &Episode, path: &Path) -> CliResult<MilestonePlan> {
    ep.milestones.clone().ok_or_else(|| CliError::validation(format!("{} carries no milestones; run label first", path.display())))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> CliResult<serde_json::Value> {
    let scenarios = gen_scenarios(cfg.world.kind, cfg.world.count, cfg.world.seed).or_invalid("world")?;
    start(cfg, out)?;
    let episodes: Vec<Episode> = scenarios
        .par_iter()
        .map(|s| scripted_expert_with(s, &cfg.world.expert).map(|(e, _)| e))
        .collect::<Result<_, _>>()
        .or_runtime("expert")?;
    let mut frames = 0;
    for (i, ep) in episodes.iter().enumerate() {
        ep.save(&out.join(format!("{EPISODE_PREFIX}{i:05}.json"))).or_runtime("write episode")?;
        frames += ep.len();
    }
    Ok(json!({ "command": "gen-data", "episodes": episodes.len(), "frames": frames, "out": out }))
}

pub fn label(cfg: &RunConfig, input: &Path, out: &Path) -> CliResult<serde_json::Value> {
    let episodes = io::load_episodes(input)?;
    let remote = match cfg.milestone.annotator {
        AnnotatorKind::Remote => Some(RemoteAnnotator::new(cfg.milestone.remote.clone()).or_invalid("annotator")?),
        AnnotatorKind::Rule => None,
    };
    start(cfg, out)?;
    let library = SkillLibrary::default();
    let label_one = |ep: &Episode| -> CliResult<MilestonePlan> {
        match &remote {
            Some(r) => label_episode(ep, &cfg.milestone.label, &library, r),
            None => label_episode(ep, &cfg.milestone.label, &library, &RuleAnnotator),
        }
        .or_runtime("label")
    };
    // Remote requests go one at a time, in order.
    let plans: Vec<MilestonePlan> = if remote.is_some() {
        episodes.iter().map(|(_, e)| label_one(e)).collect::<CliResult<_>>()?
    } else {
        episodes.par_iter().map(|(_, e)| label_one(e)).collect::<CliResult<_>>()?
    };
    let mut segments = 0;
    for ((path, ep), plan) in episodes.into_iter().zip(plans) {
        segments += plan.len();
        let labeled = Episode { milestones: Some(plan), ..ep };
        let name = path.file_name().expect("listed file");
        labeled.save(&out.join(name)).or_runtime("write episode")?;
    }
    Ok(json!({ "command": "label", "segments": segments, "out": out }))
}

pub fn pack(cfg: &RunConfig, input: &Path, out: &Path) -> CliResult<serde_json::Value> {
    let episodes = io::load_episodes(input)?;
    let plans: Vec<MilestonePlan> = episodes.iter().map(|(p, e)| plan_of(e, p)).collect::<CliResult<_>>()?;
    start(cfg, out)?;
    let seed = cfg.seed(stream::PACK, 0);
    let mut sequences = Vec::new();
    for (i, ((_, ep), plan)) in episodes.iter().zip(&plans).enumerate() {
        let mut rng = derived_rng(seed, &[i as u64]);
        let packed = pack_episode(ep, plan, cfg.codec.windows_per_episode, &mut rng).or_runtime("pack")?;
        sequences.extend(packed.into_iter().map(|(_, s)| s));
    }
    let path = out.join(SEQUENCES_FILE);
    write_sequences(&path, &sequences).or_runtime("write sequences")?;
    let tokens: usize = sequences.iter().map(|s| s.len()).sum();
    let longest = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
    let supervised: usize = sequences.iter().map(|s| s.len() - s.context_len()).sum();
    Ok(json!({
        "command": "pack",
        "sequences": sequences.len(),
        "tokens": tokens,
        "supervised_tokens": supervised,
        "longest": longest,
        "mean_length": tokens as f64 / sequences.len().max(1) as f64,
        "out": path,
    }))
}

fn sequences_at(path: &Path) -> CliResult<Vec<TokenSequence>> {
    let file = if path.is_dir() { path.join(SEQUENCES_FILE) } else { path.to_path_buf() };
    io::require_exists(&file)?;
    let seqs = read_sequences(&file).or_invalid(&file.display().to_string())?;
    if seqs.is_empty() {
        return Err(CliError::validation(format!("{} holds no sequences", file.display())));
    }
    Ok(seqs)
}

pub fn train_wm(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<serde_json::Value> {
    let seqs = sequences_at(data)?;
    let p = &cfg.planner;
    start(cfg, out)?;
    let (checkpoint, losses) = match p.model {
        PlannerKind::Count => {
            let mut m = CountModel::new(VOCAB_SIZE as usize, p.count.order, p.count.alpha).or_invalid("planner.count")?;
            m.fit(seqs.iter().map(|s| (s.tokens(), s.context_len()))).or_runtime("count")?;
            let weighted: f64 = seqs
                .iter()
                .map(|s| ce_loss(&m, s).map(|l| l * (s.len() - s.context_len()) as f64))
                .sum::<Result<f64, _>>()
                .or_runtime("loss")?;
            let n: usize = seqs.iter().map(|s| s.len() - s.context_len()).sum();
            (m.to_checkpoint().or_runtime("checkpoint")?, vec![weighted / n as f64])
        }
        PlannerKind::Mlp => {
            let mut rng = rng_from_seed(cfg.seed(stream::WM_INIT, 0));
            let mut m = ContextMlp::<f32>::init(&p.mlp, VOCAB_SIZE as usize, &mut rng).or_invalid("planner.mlp")?;
            let train = planner::TrainConfig { seed: cfg.seed(stream::WM_TRAIN, p.train.seed), ..p.train.clone() };
            let corpus: Vec<(&[u32], usize)> = seqs.iter().map(|s| (s.tokens(), s.context_len())).collect();
            let report = planner::train_context_mlp(&mut m, &corpus, &train).or_runtime("train")?;
            (m.to_checkpoint(), report.losses)
        }
    };
    checkpoint.save(&out.join(MODEL_FILE)).or_runtime("write model")?;
    io::write_file(&out.join(CURVE_FILE), curve_csv(&losses).as_bytes())?;
    Ok(json!({ "command": "train-wm", "sequences": seqs.len(), "final_loss": losses.last(), "out": out }))
}

fn policy_samples(cfg: &RunConfig, data: &Path) -> CliResult<Vec<PolicySample>> {
    io::require_exists(data)?;
    if data.is_file() {
        return read_dataset(data).or_invalid(&data.display().to_string());
    }
    let episodes = io::load_episodes(data)?;
    let labeled: Vec<(Episode, MilestonePlan)> =
        episodes.into_iter().map(|(p, e)| plan_of(&e, &p).map(|plan| (e, plan))).collect::<CliResult<_>>()?;
    let ds = DatasetConfig { seed: cfg.seed(stream::POLICY_DATA, cfg.policy.dataset.seed), ..cfg.policy.dataset.clone() };
    build_dataset(&labeled, &ds).or_invalid("dataset")
}

pub fn train_policy_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<serde_json::Value> {
    let samples = policy_samples(cfg, data)?;
    let mut policy =
        FlowPolicy::<f32>::init(&cfg.policy.net, &mut rng_from_seed(cfg.seed(stream::POLICY_INIT, 0))).or_invalid("policy.net")?;
    start(cfg, out)?;
    let train = subgoal_core::policy::PolicyTrainConfig {
        seed: cfg.seed(stream::POLICY_TRAIN, cfg.policy.train.seed),
        ..cfg.policy.train.clone()
    };
    let report = train_policy(&mut policy, &samples, &train).or_runtime("train")?;
    policy.to_checkpoint().save(&out.join(POLICY_FILE)).or_runtime("write policy")?;
    io::write_file(&out.join(CURVE_FILE), curve_csv(&report.losses).as_bytes())?;
    Ok(json!({
        "command": "train-policy",
        "samples": samples.len(),
        "no_goal": policy.no_goal,
        "final_loss": report.losses.last(),
        "out": out,
    }))
}

/// A planner loaded from a checkpoint of either kind.
pub fn load_planner(path: &Path) -> CliResult<Box<dyn NextTokenModel>> {
    io::require_exists(path)?;
    let c = Checkpoint::load(path).or_invalid(&path.display().to_string())?;
    match c.kind.as_str() {
        planner::count::KIND => Ok(Box::new(CountModel::from_checkpoint(&c).or_invalid("count model")?)),
        planner::context_mlp::KIND => Ok(Box::new(ContextMlp::<f32>::from_checkpoint(&c).or_invalid("context MLP")?)),
        other => Err(CliError::validation(format!("{} holds a {other:?} model, not a planner", path.display()))),
    }
}

#[derive(Serialize)]
struct PlannedStage {
    stage_index: usize,
    subtask: String,
    head_image: String,
    wrist_image: String,
}

pub fn plan(cfg: &RunConfig, model: &Path, episode: &Path, stage: usize, out: &Path) -> CliResult<serde_json::Value> {
    let planner = load_planner(model)?;
    let ep = io::load_episode(episode)?;
    let start_frame = match (&ep.milestones, stage) {
        (_, 0) => 0,
        (Some(plan), s) if s < plan.len() => plan.segments[s].from,
        _ => return Err(CliError::validation(format!("stage {stage} needs a labeled episode with more than {stage} stages"))),
    };
    start(cfg, out)?;
    let prefix = context_tokens(&ep.rasters[start_frame], &ep.instruction);
    let best = beam_search(planner.as_ref(), &prefix, &cfg.planner.beam).or_runtime("decode")?;
    let seq = TokenSequence::new(best.tokens.clone()).or_runtime("decoded sequence")?;
    let steps = decode_plan(&seq, stage).or_runtime("decoded plan")?;
    let mut stages = Vec::new();
    for s in &steps {
        let [head, wrist] = [0, 1].map(|v| format!("stage{}_{}.pgm", s.stage_index, ["head", "wrist"][v]));
        io::write_file(&out.join(&head), io::pgm(&s.goal[0]).as_bytes())?;
        io::write_file(&out.join(&wrist), io::pgm(&s.goal[1]).as_bytes())?;
        stages.push(PlannedStage { stage_index: s.stage_index, subtask: s.subtask.clone(), head_image: head, wrist_image: wrist });
    }
    // On a labeled episode, report whether the decode equals the sequence
    // packed from that same start.
    let reference = match &ep.milestones {
        Some(p) => Some(assemble(&ep, p, start_frame, stage).or_runtime("assemble")?.tokens() == best.tokens.as_slice()),
        None => None,
    };
    io::write_json(
        &out.join("plan.json"),
        &json!({ "start_frame": start_frame, "start_stage": stage, "log_prob": best.log_prob, "stages": stages, "tokens": best.tokens }),
    )?;
    Ok(json!({ "command": "plan", "stages": steps.len(), "matches_episode": reference, "out": out }))
}

/// `kind:seed:index`, or a scenario or episode JSON file.
pub fn parse_scenario(spec: &str) -> CliResult<ScenarioDescriptor> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).or_invalid(spec)?;
        if let Ok(s) = serde_json::from_str::<ScenarioDescriptor>(&text) {
            return Ok(s);
        }
        return Ok(io::load_episode(path)?.scenario);
    }
    let bad = || CliError::validation(format!("scenario {spec:?} is neither a file nor kind:seed:index"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [kind, seed, index] = parts[..] else { return Err(bad()) };
    let kind: ScenarioKind = kind.parse().map_err(|_| bad())?;
    let seed: u64 = seed.parse().map_err(|_| bad())?;
    let index: usize = index.parse().map_err(|_| bad())?;
    gen_scenarios(kind, index + 1, seed).or_invalid("scenario")?.pop().ok_or_else(bad)
}

/// A policy named on the command line.
pub enum LoadedPolicy {
    Expert,
    Zero,
    Flow(FlowPolicy<f32>),
}

impl LoadedPolicy {
    pub fn parse(spec: &str) -> CliResult<Self> {
        match spec {
            "expert" => Ok(LoadedPolicy::Expert),
            "zero" => Ok(LoadedPolicy::Zero),
            path => {
                let p = Path::new(path);
                let file = if p.is_dir() { p.join(POLICY_FILE) } else { p.to_path_buf() };
                io::require_exists(&file)?;
                let c = Checkpoint::load(&file).or_invalid(path)?;
                Ok(LoadedPolicy::Flow(FlowPolicy::from_checkpoint(&c).or_invalid(path)?))
            }
        }
    }

    pub fn as_eval(&self) -> EvalPolicy<'_> {
        match self {
            LoadedPolicy::Expert => EvalPolicy::Expert,
            LoadedPolicy::Zero => EvalPolicy::Zero,
            LoadedPolicy::Flow(p) => EvalPolicy::Flow(p),
        }
    }
}

fn expert_for(cfg: &RunConfig, s: &ScenarioDescriptor) -> CliResult<ExpertPolicy> {
    let (episode, _) = scripted_expert(s).or_runtime("expert")?;
    let plan = label_episode(&episode, &cfg.milestone.label, &SkillLibrary::default(), &RuleAnnotator).or_runtime("label")?;
    Ok(ExpertPolicy { episode, plan })
}

pub struct RolloutArgs<'a> {
    pub policy: &'a str,
    pub planner: Option<&'a Path>,
    pub scenario: &'a str,
    pub seed: u64,
}

pub fn rollout(cfg: &RunConfig, args: &RolloutArgs<'_>, out: &Path) -> CliResult<serde_json::Value> {
    let policy = LoadedPolicy::parse(args.policy)?;
    let scenario = parse_scenario(args.scenario)?;
    let planner = args.planner.map(load_planner).transpose()?;
    start(cfg, out)?;
    let expert = expert_for(cfg, &scenario)?;
    let source = match &planner {
        Some(m) => PlanSource::WorldModel { model: m.as_ref(), beam: cfg.planner.beam.clone() },
        None => PlanSource::GroundTruth(ground_truth_steps(&expert.episode, &expert.plan)),
    };
    let chunk_policy: &dyn ChunkPolicy = match &policy {
        LoadedPolicy::Expert => &expert,
        LoadedPolicy::Zero => &ZeroPolicy,
        LoadedPolicy::Flow(p) => p,
    };
    let mut rng = derived_rng(cfg.seed(stream::ROLLOUT, args.seed), &[scenario.id as u64]);
    let result = run_task(&scenario, &source, chunk_policy, &cfg.executor, &mut rng).or_runtime("rollout")?;
    let mut log = String::new();
    for r in &result.log {
        log.push_str(&serde_json::to_string(r).expect("record serializes"));
        log.push('\n');
    }
    io::write_file(&out.join("log.jsonl"), log.as_bytes())?;
    let summary = json!({
        "scenario": scenario,
        "metrics": result.metrics,
        "outcomes": result.outcomes,
        "failure": result.failure,
        "steps": result.steps,
    });
    io::write_json(&out.join("result.json"), &summary)?;
    Ok(json!({
        "command": "rollout",
        "approach": result.metrics.approach,
        "success": result.metrics.success,
        "steps": result.steps,
        "failure": result.failure,
        "out": out,
    }))
}

/// `name=spec`, or a bare spec named after its file stem.
fn named_policy(entry: &str) -> CliResult<(String, LoadedPolicy)> {
    let (name, spec) = match entry.split_once('=') {
        Some((n, s)) => (n.to_string(), s),
        None => {
            let stem = Path::new(entry).file_stem().map_or(entry.to_string(), |s| s.to_string_lossy().into_owned());
            (stem, entry)
        }
    };
    Ok((name, LoadedPolicy::parse(spec)?))
}

pub fn eval(
    cfg: &RunConfig,
    policies: &[String],
    sets: &[String],
    planner: Option<&Path>,
    out: &Path,
) -> CliResult<(serde_json::Value, String)> {
    if policies.is_empty() {
        return Err(CliError::validation("eval needs at least one --policies entry"));
    }
    let loaded: Vec<(String, LoadedPolicy)> = policies.iter().map(|p| named_policy(p)).collect::<CliResult<_>>()?;
    let specs: Vec<SetSpec> =
        if sets.is_empty() { cfg.eval.sets.clone() } else { sets.iter().map(|s| SetSpec::parse(s)).collect::<CliResult<_>>()? };
    if specs.is_empty() {
        return Err(CliError::validation("eval needs at least one scenario set"));
    }
    let scenario_sets: Vec<ScenarioSet> = specs
        .iter()
        .map(|s| Ok(ScenarioSet { name: s.name(), scenarios: gen_scenarios(s.kind, s.count, s.seed).or_invalid("eval set")? }))
        .collect::<CliResult<_>>()?;
    let planner = planner.map(load_planner).transpose()?;
    let mut cfg = cfg.clone();
    cfg.eval.sets = specs;
    start(&cfg, out)?;
    let ecfg = EvalConfig {
        rollouts: cfg.eval.rollouts,
        master_seed: cfg.seed(stream::EVAL, 0),
        executor: cfg.executor.clone(),
        label: cfg.milestone.label.clone(),
        beam: cfg.planner.beam.clone(),
    };
    let named: Vec<(String, EvalPolicy<'_>)> = loaded.iter().map(|(n, p)| (n.clone(), p.as_eval())).collect();
    let rows = evaluate(&named, &scenario_sets, planner.as_deref(), &ecfg).or_runtime("evaluate")?;
    io::write_file(&out.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
    let table = metrics_table(&rows);
    io::write_file(&out.join("metrics.txt"), table.as_bytes())?;
    Ok((json!({ "command": "eval", "rows": rows.len(), "out": out }), table))
}

pub fn default_out(cfg: &RunConfig, out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| cfg.out_dir.join(command))
}

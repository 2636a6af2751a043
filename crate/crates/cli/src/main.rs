//! `subgoal`: generate demonstrations, label milestones, pack token
//! sequences, train the planner and the policy, then plan, roll out and
//! evaluate.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or inputs, 2 for
//! failures after the inputs were accepted. Errors go to stderr as one line
//! of JSON.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use subgoal_core::toyworld::ScenarioKind;

use config::{AnnotatorKind, PlannerKind, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "subgoal", version, about = "Milestone planning and goal-conditioned control in a tabletop toy world")]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record scripted demonstrations.
    GenData {
        #[arg(long)]
        kind: Option<ScenarioKind>,
        #[arg(long)]
        count: Option<usize>,
        /// Scenario generation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment demonstrations into milestones.
    Label {
        /// Directory of episodes.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        annotator: Option<AnnotatorKind>,
        /// Annotation service URL; implies the remote annotator.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pack labeled episodes into token sequences.
    Pack {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the planner on packed sequences.
    TrainWm {
        /// A sequence file or the directory holding one.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: Option<PlannerKind>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the goal-conditioned policy.
    TrainPolicy {
        /// A directory of labeled episodes or a sample cache.
        #[arg(long)]
        data: PathBuf,
        /// Drop goal conditioning.
        #[arg(long)]
        no_goal: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a milestone plan from an episode frame.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        episode: PathBuf,
        /// Plan from the start of this stage of a labeled episode.
        #[arg(long, default_value_t = 0)]
        stage: usize,
        /// Beam width.
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one task in closed loop.
    Rollout {
        /// `expert`, `zero` or a policy checkpoint.
        #[arg(long, default_value = "expert")]
        policy: String,
        /// Planner checkpoint.
        #[arg(long, conflicts_with = "ground_truth_plan", required_unless_present = "ground_truth_plan")]
        planner: Option<PathBuf>,
        /// Follow the expert's labeled milestones instead of a planner.
        #[arg(long)]
        ground_truth_plan: bool,
        /// Scenario JSON, episode JSON or `kind:seed:index`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate policies over scenario sets.
    Eval {
        /// `name=spec` entries where spec is `expert`, `zero` or a checkpoint.
        #[arg(long, num_args = 1.., required = true)]
        policies: Vec<String>,
        /// `kind:count:seed` entries; the configured sets otherwise.
        #[arg(long, num_args = 1..)]
        sets: Vec<String>,
        /// Plan with this model instead of the ground-truth milestones.
        #[arg(long)]
        planner: Option<PathBuf>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Label { .. } => "label",
            Command::Pack { .. } => "pack",
            Command::TrainWm { .. } => "train-wm",
            Command::TrainPolicy { .. } => "train-policy",
            Command::Plan { .. } => "plan",
            Command::Rollout { .. } => "rollout",
            Command::Eval { .. } => "eval",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::validation("--jobs must be positive"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.master_seed {
        cfg.master_seed = s;
    }
    let name = cli.command.name();
    let summary = match cli.command {
        Command::GenData { kind, count, seed, out } => {
            cfg.world.kind = kind.unwrap_or(cfg.world.kind);
            cfg.world.count = count.unwrap_or(cfg.world.count);
            cfg.world.seed = seed.unwrap_or(cfg.world.seed);
            let out = commands::default_out(&cfg, out, name);
            commands::gen_data(&cfg, &out)?
        }
        Command::Label { data, annotator, endpoint, out } => {
            if let Some(a) = annotator {
                cfg.milestone.annotator = a;
            }
            if let Some(e) = endpoint {
                cfg.milestone.remote.endpoint = e;
                cfg.milestone.annotator = annotator.unwrap_or(AnnotatorKind::Remote);
            }
            let out = commands::default_out(&cfg, out, name);
            commands::label(&cfg, &data, &out)?
        }
        Command::Pack { data, out } => {
            let out = commands::default_out(&cfg, out, name);
            commands::pack(&cfg, &data, &out)?
        }
        Command::TrainWm { data, model, steps, out } => {
            cfg.planner.model = model.unwrap_or(cfg.planner.model);
            cfg.planner.train.steps = steps.unwrap_or(cfg.planner.train.steps);
            let out = commands::default_out(&cfg, out, name);
            commands::train_wm(&cfg, &data, &out)?
        }
        Command::TrainPolicy { data, no_goal, steps, out } => {
            cfg.policy.net.no_goal |= no_goal;
            cfg.policy.train.steps = steps.unwrap_or(cfg.policy.train.steps);
            let out = commands::default_out(&cfg, out, name);
            commands::train_policy_cmd(&cfg, &data, &out)?
        }
        Command::Plan { model, episode, stage, beam, out } => {
            cfg.planner.beam.width = beam.unwrap_or(cfg.planner.beam.width);
            let out = commands::default_out(&cfg, out, name);
            commands::plan(&cfg, &model, &episode, stage, &out)?
        }
        Command::Rollout { policy, planner, ground_truth_plan: _, scenario, seed, out } => {
            let out = commands::default_out(&cfg, out, name);
            let args = commands::RolloutArgs { policy: &policy, planner: planner.as_deref(), scenario: &scenario, seed };
            commands::rollout(&cfg, &args, &out)?
        }
        Command::Eval { policies, sets, planner, rollouts, out } => {
            cfg.eval.rollouts = rollouts.unwrap_or(cfg.eval.rollouts);
            let out = commands::default_out(&cfg, out, name);
            let (summary, table) = commands::eval(&cfg, &policies, &sets, planner.as_deref(), &out)?;
            print!("{table}");
            summary
        }
    };
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(config::key_listing());
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::validation(e.render().to_string().trim_end()).to_json());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

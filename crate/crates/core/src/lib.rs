//! Hierarchical imitation on a 2-D tabletop.
//!
//! Expert demonstrations are cut into milestones ([`milestone`]), encoded as
//! interleaved subtask-text and goal-raster token sequences ([`codec`]) and
//! modeled autoregressively ([`planner`]). A flow-matching policy
//! ([`policy`]) reaches each decoded goal, and [`executor`] runs the two in
//! closed loop against the simulator in [`toyworld`].
//!
//! All randomness flows from explicit seeds through [`rng`], so every
//! pipeline stage is reproducible.

pub mod checkpoint;
pub mod codec;
pub mod executor;
pub mod milestone;
pub mod nn;
pub mod planner;
pub mod policy;
pub mod rng;
pub mod toyworld;

pub use checkpoint::{Checkpoint, Tensor};
pub use codec::{CodecError, TokenSequence};
pub use executor::{ExecutorConfig, ExecutorError, TaskResult};
pub use milestone::{MilestoneError, MilestonePlan, Segment};
pub use planner::{NextTokenModel, PlannerError};
pub use policy::{ActionChunk, Conditioning, FlowPolicy, PolicyError};
pub use rng::{derive_seed, derived_rng, rng_from_seed, Rng};
pub use toyworld::{Action, Episode, Observation, ScenarioDescriptor, ScenarioKind, WorldError, WorldState};

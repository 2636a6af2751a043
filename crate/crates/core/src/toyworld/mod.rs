//! Deterministic 2-D tabletop world: state transition, rasterized views,
//! scenario generation, a scripted pick-and-place expert and task metrics.

pub mod episode;
pub mod expert;
pub mod metrics;
pub mod render;
pub mod scenario;
pub mod state;

pub use episode::Episode;
pub use expert::{scripted_expert, scripted_expert_with, ExpertConfig, ExpertTrace, PHASE_NAMES};
pub use metrics::{success_metrics, success_metrics_states, TaskMetrics};
pub use render::{render, Observation, Raster, View, RASTER_CELLS, RASTER_SIDE};
pub use scenario::{gen_scenarios, object_category, object_name, ScenarioDescriptor, ScenarioKind};
pub use state::{step, Action, Plate, TableObject, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("action component {component} = {value} outside [-0.1, 0.1]")]
    ActionOutOfBounds { component: usize, value: f32 },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("requested {requested} scenarios but only {cap} distinct layouts exist")]
    CapacityExceeded { requested: usize, cap: usize },
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
}

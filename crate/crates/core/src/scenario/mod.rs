//! Synthetic world: orbits, user course, measurement synthesis, Monte Carlo
//! execution and metrics.

pub mod config;
pub mod crb;
pub mod metrics;
pub mod montecarlo;
pub mod orbit;
pub mod synth;
pub mod trajectory;
pub mod world;

use thiserror::Error;

use crate::filter::FilterError;
use crate::fim::FimError;
use crate::geometry::GeometryError;
use crate::manifold::ManifoldError;

pub use config::{EpsilonSchedule, InitialUncertainty, ScenarioConfig};
pub use crb::{crb_sweep, CrbGrid, CrbRow};
pub use montecarlo::{run_monte_carlo, run_trial, summarize, TrialRun, VariantSummary};
pub use trajectory::Segment;
pub use world::{build_world, derive_seed, observe, run_variant, FilterVariant, RunVariant, StepRecord, TrialWorld};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("the sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fim(#[from] FimError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

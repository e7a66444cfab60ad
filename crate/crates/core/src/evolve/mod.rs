//! Island-model genetic programming over skill-constrained expression trees.

mod config;
mod constants;
mod hall;
mod search;
mod variation;

use thiserror::Error;

use crate::fitness::{FitnessError, InvalidReason};

pub use config::{ConstantOptConfig, EvolutionConfig, MutationWeights};
pub use constants::{optimize_constants, MAX_EXACT_CONSTANTS};
pub use hall::{HallEntry, HallOfFame};
pub use search::{migrate, run_discovery, Checkpoint, DiscoveryOutcome, EvaluationCounts, Individual, Search};
pub use variation::{MutationKind, Variation, POW_EXPONENTS};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("no valid candidate in the whole budget ({} evaluations; dominant failure: {})", counts.total(), dominant.map_or("none", failure_name))]
    AllInvalid {
        dominant: Option<InvalidReason>,
        counts: EvaluationCounts,
    },
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn failure_name(r: InvalidReason) -> &'static str {
    match r {
        InvalidReason::NonFiniteStress => "non-finite stress on training data",
        InvalidReason::NonFiniteConstraint => "non-finite constraint penalty on the sample grid",
    }
}

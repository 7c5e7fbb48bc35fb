//! Two-state restless bandits: instances, Whittle indices, and the top-K
//! index policy simulator.

mod instance;
mod simulate;
mod solver;
mod utility;
mod whittle;

pub use instance::{ArmModel, FeatureCategory, FeatureSchema, RmabInstance, Transitions, SCHEMA_VERSION};
pub use simulate::{select_top_k, simulate, simulate_with_indices, SimulationOutcome, Simulator};
pub use solver::{q_values, QTable, SolveMethod, SolverConfig};
pub use utility::{emd_1d, utility_distribution_diff, CategoryUtility, UtilityFeatureDistribution};
pub use whittle::{compute_indices, whittle_index, WhittleCache, WhittleIndexSet, WhittleOutcome};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmabError {
    #[error("invalid arm: {0}")]
    InvalidArm(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("value iteration did not converge after {iterations} iterations (last sup-norm change {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },

    #[error("unknown feature category {0:?}")]
    UnknownCategory(String),

    #[error("degenerate distribution: category {0:?} has no utility mass")]
    DegenerateDistribution(String),

    #[error("reward table has {got} rows, instance has {expected} arms")]
    TableLength { expected: usize, got: usize },

    #[error("at least one simulation seed is required")]
    NoSeeds,

    #[error("instance format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

/// Per-arm rewards `r_i(0), r_i(1)` induced by one global reward function.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RewardTable {
    pub values: Vec<[f64; 2]>,
}

impl RewardTable {
    pub fn new(values: Vec<[f64; 2]>) -> Result<Self, RmabError> {
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RmabError::InvalidInput("reward table contains a non-finite value".into()));
        }
        Ok(Self { values })
    }

    /// The default reward `R*(s) = s` for `n` arms.
    pub fn default_reward(n: usize) -> Self {
        Self { values: vec![[0.0, 1.0]; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|[a, b]| [a * c, b * c]).collect() }
    }
}

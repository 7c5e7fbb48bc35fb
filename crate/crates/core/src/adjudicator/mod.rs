//! Clause-by-clause scoring of a candidate pool and social-welfare selection.

mod matrix;
mod scorers;
mod welfare;

pub use matrix::{
    argmax_first, pareto_front, relative_regret, select, Normalization, RankedCandidate, ScoreColumn, ScoreMatrix,
    Selection, SHIFT_EPSILON,
};
pub use scorers::{
    llm_score, score_prompt, shift_score, simulate_pool, simulator_score, utility_score, PoolSimulation, ScorerKind,
};
pub use welfare::{pmean, WelfareFunction};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::DslError;
use crate::rmab::RmabError;

#[derive(Debug, Error)]
pub enum AdjudicatorError {
    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("p must lie in [-inf, 1], got {0}")]
    InvalidP(f64),

    #[error("unknown welfare function {0:?}")]
    UnknownWelfare(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no proxy reward for clause {0:?}")]
    MissingProxy(String),

    #[error(transparent)]
    Rmab(#[from] RmabError),

    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseScore {
    pub clause: String,
    pub raw: f64,
    pub normalized: f64,
    pub available: bool,
}

/// Audit record of one selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen: usize,
    pub chosen_source: Option<String>,
    pub welfare_function: String,
    pub selection: Selection,
    pub per_clause_scores: Vec<ClauseScore>,
    /// Pareto membership of every candidate; present for two-clause matrices.
    pub pareto_flags: Option<Vec<bool>>,
    pub shift_applied: f64,
}

impl SelectionReport {
    pub fn new(matrix: &ScoreMatrix, welfare: &WelfareFunction, sources: Option<&[String]>) -> Result<Self, AdjudicatorError> {
        let selection = select(matrix, welfare)?;
        let chosen = selection.chosen;
        let per_clause_scores = matrix
            .columns
            .iter()
            .map(|c| ClauseScore {
                clause: c.clause.clone(),
                raw: c.raw[chosen],
                normalized: c.normalized[chosen],
                available: c.available,
            })
            .collect();
        let pareto_flags = pareto_front(matrix).ok().map(|front| {
            let mut flags = vec![false; matrix.n_candidates];
            for i in front {
                flags[i] = true;
            }
            flags
        });
        Ok(Self {
            chosen,
            chosen_source: sources.and_then(|s| s.get(chosen).cloned()),
            welfare_function: welfare.name(),
            shift_applied: selection.shift,
            selection,
            per_clause_scores,
            pareto_flags,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

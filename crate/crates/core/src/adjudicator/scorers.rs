use serde::{Deserialize, Serialize};

use super::matrix::{Normalization, ScoreColumn, ScoreMatrix};
use super::AdjudicatorError;
use crate::dsl::RewardExpression;
use crate::generator::{llm::LlmClient, PreferenceClause, PreferencePrompt};
use crate::rmab::{
    utility_distribution_diff, RewardTable, RmabInstance, SimulationOutcome, Simulator, UtilityFeatureDistribution,
};

/// Every candidate's index policy and the default policy, simulated on the
/// same seeds with the same accounting tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSimulation {
    pub candidates: Vec<SimulationOutcome>,
    pub default: SimulationOutcome,
    pub n_accounting: usize,
}

impl PoolSimulation {
    pub fn distributions(&self) -> Vec<&UtilityFeatureDistribution> {
        self.candidates.iter().map(|c| &c.utility).collect()
    }
}

pub fn simulate_pool(
    instance: &RmabInstance,
    candidates: &[RewardExpression],
    accounting: &[RewardTable],
    seeds: &[u64],
    sim: &Simulator<'_>,
) -> Result<PoolSimulation, AdjudicatorError> {
    let default_table = RewardTable::default_reward(instance.n_arms());
    let default = sim.run(instance, &default_table, accounting, seeds)?;
    let candidates = sim
        .exec
        .map(candidates, |expr| -> Result<SimulationOutcome, AdjudicatorError> {
            let table = expr.to_reward_table(instance)?;
            Ok(sim.run(instance, &table, accounting, seeds)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PoolSimulation { candidates, default, n_accounting: accounting.len() })
}

/// Relative change of the proxy-accounted discounted total against the
/// default policy: `(V - V*) / V*`.
pub fn simulator_score(clause: &str, pool: &PoolSimulation, table: usize) -> Result<ScoreColumn, AdjudicatorError> {
    if table >= pool.n_accounting {
        return Err(AdjudicatorError::Shape(format!("accounting table {table} out of {}", pool.n_accounting)));
    }
    let raw = pool.candidates.iter().map(|c| c.totals[table]).collect();
    Ok(ScoreColumn::relative_change(clause, "simulator", raw, pool.default.totals[table]))
}

/// `1 - minmax(EMD)` of each candidate's utility histogram over `category`
/// against the default policy's.
pub fn shift_score(clause: &str, pool: &PoolSimulation, category: &str) -> Result<ScoreColumn, AdjudicatorError> {
    let raw = pool
        .candidates
        .iter()
        .map(|c| utility_distribution_diff(&c.utility, &pool.default.utility, category))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreColumn::min_max(clause, "shift", raw, true))
}

/// Min-max normalised total good-state utility.
pub fn utility_score(clause: &str, pool: &PoolSimulation) -> ScoreColumn {
    let raw = pool.candidates.iter().map(|c| c.utility.total).collect();
    ScoreColumn::min_max(clause, "utility", raw, false)
}

/// 1-5 alignment ratings from a language model. Any unusable answer marks the
/// whole column unavailable.
pub fn llm_score(
    client: &LlmClient,
    clause: &PreferenceClause,
    sources: &[String],
    distributions: &[&UtilityFeatureDistribution],
) -> ScoreColumn {
    let label = clause.label();
    let mut raw = Vec::with_capacity(sources.len());
    for (src, dist) in sources.iter().zip(distributions) {
        match client.rate(clause, src, dist) {
            Ok(Some(r)) => raw.push(f64::from(r)),
            Ok(None) => {
                log::warn!("no usable rating for clause {label}; column marked unavailable");
                return ScoreColumn::unavailable(label, "llm", sources.len(), "unparseable rating");
            }
            Err(e) => {
                log::warn!("rating request failed for clause {label}: {e}; column marked unavailable");
                return ScoreColumn::unavailable(label, "llm", sources.len(), &e.to_string());
            }
        }
    }
    ScoreColumn::new(label, "llm", raw, Normalization::Identity { reason: "ratings used as given".into() })
}

/// Which scorer handles prioritisation clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Simulator,
    Llm,
}

/// Builds the score matrix of `prompt` over a simulated pool.
///
/// `proxy_tables[i]` is the accounting-table index of clause `i`'s proxy
/// reward (needed by simulator-scored prioritisation clauses). `llm` supplies
/// the client and candidate sources for LLM scoring.
pub fn score_prompt(
    prompt: &PreferencePrompt,
    pool: &PoolSimulation,
    proxy_tables: &[Option<usize>],
    kind: ScorerKind,
    llm: Option<(&LlmClient, &[String])>,
) -> Result<ScoreMatrix, AdjudicatorError> {
    let mut columns = Vec::with_capacity(prompt.clauses.len());
    for (i, clause) in prompt.clauses.iter().enumerate() {
        let label = clause.label();
        let col = match clause {
            PreferenceClause::Prioritize { .. } => match kind {
                ScorerKind::Simulator => {
                    let table = proxy_tables
                        .get(i)
                        .copied()
                        .flatten()
                        .ok_or_else(|| AdjudicatorError::MissingProxy(label.clone()))?;
                    simulator_score(&label, pool, table)?
                }
                ScorerKind::Llm => {
                    let (client, sources) =
                        llm.ok_or_else(|| AdjudicatorError::Shape("LLM scoring needs a client".into()))?;
                    llm_score(client, clause, sources, &pool.distributions())
                }
            },
            PreferenceClause::NoShift { category } => shift_score(&label, pool, category)?,
            PreferenceClause::MaximizeUtility => utility_score(&label, pool),
        };
        columns.push(col);
    }
    ScoreMatrix::new(columns)
}

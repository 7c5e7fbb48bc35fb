//! Candidate reward generation by evolutionary search with reflection.
//!
//! Each round asks a backend for `n_p` proposals (seeded with the previous
//! round's pick), simulates every proposal's index policy to get its utility
//! feature distribution, and reflects to pick the next seed. The pool keeps
//! all `n_p * n_r` candidates; the final round's pick is the plain
//! reflection baseline.

pub mod llm;
mod prompt;
pub mod prompts;
pub mod template;

pub use prompt::{Direction, PreferenceClause, PreferencePrompt};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudicator::{select, AdjudicatorError, ScoreColumn, ScoreMatrix, WelfareFunction};
use crate::dsl::{DslError, RewardExpression};
use crate::par::derive_seed;
use crate::rmab::{
    utility_distribution_diff, RewardTable, RmabError, RmabInstance, Simulator, UtilityFeatureDistribution,
};
use llm::LlmClient;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("invalid generator config: {0}")]
    Config(String),

    #[error("language-model backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("reflection over an empty round")]
    EmptyRound,

    #[error("pool format: {0}")]
    Format(String),

    #[error(transparent)]
    Dsl(#[from] DslError),

    #[error(transparent)]
    Rmab(#[from] RmabError),

    #[error(transparent)]
    Adjudicator(#[from] Box<AdjudicatorError>),
}

impl From<AdjudicatorError> for GeneratorError {
    fn from(e: AdjudicatorError) -> Self {
        GeneratorError::Adjudicator(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Template,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectStrategy {
    /// Ask the language model for the best function number.
    Llm,
    /// Utilitarian selection over distribution-based clause scores.
    Adjudicator,
}

/// Wording of the reflection request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectStyle {
    #[default]
    Standard,
    /// Adds guidance on reading the distributions.
    PromptEngineering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub proposals_per_round: usize,
    pub rounds: usize,
    pub backend: BackendKind,
    pub reflect: ReflectStrategy,
    #[serde(default)]
    pub reflect_style: ReflectStyle,
    pub master_seed: u64,
    /// Replace proposals with `r(1) < r(0)` for some arm by a template proposal.
    #[serde(default)]
    pub strict_monotone: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            proposals_per_round: 4,
            rounds: 5,
            backend: BackendKind::Template,
            reflect: ReflectStrategy::Adjudicator,
            reflect_style: ReflectStyle::Standard,
            master_seed: 0,
            strict_monotone: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.proposals_per_round == 0 || self.rounds == 0 {
            return Err(GeneratorError::Config("proposals_per_round and rounds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        self.proposals_per_round * self.rounds
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Template,
    Llm,
    /// The language model failed and the template backend stood in.
    TemplateFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub expression: RewardExpression,
    pub round: usize,
    pub proposal_index: usize,
    pub origin: Origin,
    pub monotone: bool,
    pub distribution: UtilityFeatureDistribution,
}

/// One line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub id: usize,
    pub source: String,
    pub round: usize,
    pub proposal_index: usize,
    pub monotone_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl PoolRecord {
    pub fn parse(&self, n_features: usize) -> Result<RewardExpression, GeneratorError> {
        Ok(RewardExpression::parse(&self.source, n_features)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFailure {
    pub round: usize,
    pub error: String,
}

/// All candidates of an evolutionary run (a multiset: duplicates are kept).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub prompt: PreferencePrompt,
    pub candidates: Vec<Candidate>,
    /// Id of the candidate reflection picked in each completed round.
    pub round_choices: Vec<usize>,
    pub reflect: ReflectStrategy,
    /// Rounds whose reflection fell back from the language model.
    pub reflect_fallbacks: Vec<usize>,
    pub failures: Vec<RoundFailure>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// The final round's reflection pick.
    pub fn final_choice(&self) -> Option<&Candidate> {
        self.round_choices.last().map(|&i| &self.candidates[i])
    }

    pub fn expressions(&self) -> Vec<RewardExpression> {
        self.candidates.iter().map(|c| c.expression.clone()).collect()
    }

    pub fn sources(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.expression.source().to_string()).collect()
    }

    pub fn records(&self) -> Vec<PoolRecord> {
        self.candidates
            .iter()
            .map(|c| PoolRecord {
                id: c.id,
                source: c.expression.source().to_string(),
                round: c.round,
                proposal_index: c.proposal_index,
                monotone_flag: c.monotone,
                origin: Some(c.origin),
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("pool record serializes") + "\n")
            .collect()
    }

    /// Summary with round picks and failures, for `pool_manifest.json`.
    pub fn manifest(&self) -> PoolManifest {
        PoolManifest {
            prompt: self.prompt.clone(),
            size: self.len(),
            round_choices: self.round_choices.clone(),
            final_choice: self.round_choices.last().copied(),
            reflect: self.reflect,
            reflect_fallbacks: self.reflect_fallbacks.clone(),
            failures: self.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub prompt: PreferencePrompt,
    pub size: usize,
    pub round_choices: Vec<usize>,
    pub final_choice: Option<usize>,
    pub reflect: ReflectStrategy,
    pub reflect_fallbacks: Vec<usize>,
    pub failures: Vec<RoundFailure>,
}

pub fn parse_pool(text: &str) -> Result<Vec<PoolRecord>, GeneratorError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GeneratorError::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

/// A proposal backend bound to its resources.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    Template,
    Llm(&'a LlmClient),
}

/// One proposal. The language-model backend falls back to the template
/// backend when no reply parses.
pub fn propose(
    backend: Backend<'_>,
    prompt: &PreferencePrompt,
    schema: &crate::rmab::FeatureSchema,
    seed: Option<&RewardExpression>,
    proposal_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RewardExpression, Origin), GeneratorError> {
    match backend {
        Backend::Template => Ok((template::propose(prompt, schema, seed, proposal_index, rng)?, Origin::Template)),
        Backend::Llm(client) => {
            prompt.validate(schema)?;
            match client.propose(prompt, schema, seed)? {
                Some(e) => Ok((e, Origin::Llm)),
                None => {
                    log::warn!("no parseable proposal after {} attempts; using the template backend", client.attempts);
                    Ok((template::propose(prompt, schema, seed, proposal_index, rng)?, Origin::TemplateFallback))
                }
            }
        }
    }
}

/// Distribution-only clause scores of a round against the default policy:
/// relative change of the two extreme buckets for prioritisation clauses,
/// inverted min-max EMD for no-shift clauses, min-max total utility otherwise.
pub fn distribution_scores(
    prompt: &PreferencePrompt,
    distributions: &[&UtilityFeatureDistribution],
    default: &UtilityFeatureDistribution,
) -> Result<ScoreMatrix, GeneratorError> {
    let mut columns = Vec::new();
    for clause in &prompt.clauses {
        let label = clause.label();
        let col = match clause {
            PreferenceClause::Prioritize { category, direction } => {
                let k = 2;
                let raw = distributions
                    .iter()
                    .map(|d| Ok(d.category(category)?.extreme(k, direction.is_high())))
                    .collect::<Result<Vec<_>, RmabError>>()?;
                let base = default.category(category)?.extreme(k, direction.is_high());
                ScoreColumn::relative_change(label, "distribution", raw, base)
            }
            PreferenceClause::NoShift { category } => {
                let raw = distributions
                    .iter()
                    .map(|d| utility_distribution_diff(d, default, category))
                    .collect::<Result<Vec<_>, _>>()?;
                ScoreColumn::min_max(label, "shift", raw, true)
            }
            PreferenceClause::MaximizeUtility => {
                ScoreColumn::min_max(label, "utility", distributions.iter().map(|d| d.total).collect(), false)
            }
        };
        columns.push(col);
    }
    Ok(ScoreMatrix::new(columns)?)
}

/// Result of a reflection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reflection {
    pub index: usize,
    /// True when the language model was asked but its answer was unusable.
    pub fell_back: bool,
}

/// Picks one member of a round.
pub fn reflect(
    round: &[(&RewardExpression, &UtilityFeatureDistribution)],
    prompt: &PreferencePrompt,
    strategy: ReflectStrategy,
    llm: Option<&LlmClient>,
    default: &UtilityFeatureDistribution,
    style: ReflectStyle,
) -> Result<Reflection, GeneratorError> {
    if round.is_empty() {
        return Err(GeneratorError::EmptyRound);
    }
    if round.len() == 1 {
        return Ok(Reflection { index: 0, fell_back: false });
    }
    let mut fell_back = false;
    if strategy == ReflectStrategy::Llm {
        match llm {
            Some(client) => {
                let items: Vec<(&str, &UtilityFeatureDistribution)> = round.iter().map(|(e, d)| (e.source(), *d)).collect();
                match client.choose(prompt, &items, Some(default), style) {
                    Ok(Some(k)) => return Ok(Reflection { index: k, fell_back: false }),
                    Ok(None) => log::warn!("unparseable reflection; falling back to the adjudicator strategy"),
                    Err(e) => log::warn!("reflection request failed ({e}); falling back to the adjudicator strategy"),
                }
            }
            None => log::warn!("no language-model client for reflection; using the adjudicator strategy"),
        }
        fell_back = true;
    }
    let dists: Vec<&UtilityFeatureDistribution> = round.iter().map(|(_, d)| *d).collect();
    let matrix = distribution_scores(prompt, &dists, default)?;
    let chosen = select(&matrix, &WelfareFunction::utilitarian())?.chosen;
    Ok(Reflection { index: chosen, fell_back })
}

/// Simulation resources shared by the rounds of an evolutionary run.
#[derive(Clone, Copy)]
pub struct EvolveContext<'a> {
    pub sim: Simulator<'a>,
    pub seeds: &'a [u64],
    pub llm: Option<&'a LlmClient>,
}

/// Runs `cfg.rounds` rounds of proposal, simulation and reflection.
///
/// If a round fails after at least one round completed, the partial pool is
/// returned with the failure recorded; a failure in the first round is an
/// error.
pub fn evolve(
    instance: &RmabInstance,
    prompt: &PreferencePrompt,
    cfg: &GeneratorConfig,
    ctx: &EvolveContext<'_>,
) -> Result<CandidatePool, GeneratorError> {
    cfg.validate()?;
    prompt.validate(&instance.schema)?;
    let backend = match (cfg.backend, ctx.llm) {
        (BackendKind::Template, _) => Backend::Template,
        (BackendKind::Llm, Some(c)) => Backend::Llm(c),
        (BackendKind::Llm, None) => {
            return Err(GeneratorError::BackendUnavailable("llm backend selected but no client configured".into()))
        }
    };
    let default_table = RewardTable::default_reward(instance.n_arms());
    let default = ctx.sim.run(instance, &default_table, &[], ctx.seeds)?.utility;

    let mut pool = CandidatePool {
        prompt: prompt.clone(),
        candidates: Vec::with_capacity(cfg.pool_size()),
        round_choices: Vec::with_capacity(cfg.rounds),
        reflect: cfg.reflect,
        reflect_fallbacks: Vec::new(),
        failures: Vec::new(),
    };
    let mut seed: Option<RewardExpression> = None;
    for round in 0..cfg.rounds {
        match run_round(instance, prompt, cfg, ctx, backend, round, seed.as_ref(), &default) {
            Ok((mut fresh, reflection)) => {
                let base = pool.candidates.len();
                for (j, c) in fresh.iter_mut().enumerate() {
                    c.id = base + j;
                }
                seed = Some(fresh[reflection.index].expression.clone());
                pool.round_choices.push(base + reflection.index);
                if reflection.fell_back {
                    pool.reflect_fallbacks.push(round);
                }
                pool.candidates.extend(fresh);
            }
            Err(e) if round > 0 => {
                log::error!("round {round} failed: {e}; returning partial pool");
                pool.failures.push(RoundFailure { round, error: e.to_string() });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(pool)
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    instance: &RmabInstance,
    prompt: &PreferencePrompt,
    cfg: &GeneratorConfig,
    ctx: &EvolveContext<'_>,
    backend: Backend<'_>,
    round: usize,
    seed: Option<&RewardExpression>,
    default: &UtilityFeatureDistribution,
) -> Result<(Vec<Candidate>, Reflection), GeneratorError> {
    let n_p = cfg.proposals_per_round;
    let proposals = ctx
        .sim
        .exec
        .map_range(n_p, |j| -> Result<(RewardExpression, Origin), GeneratorError> {
            let task = (round * n_p + j) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, task));
            let (expr, origin) = propose(backend, prompt, &instance.schema, seed, j, &mut rng)?;
            if cfg.strict_monotone && !expr.is_monotone_on(instance) {
                log::warn!("proposal {:?} violates r(1) >= r(0); replaced by a template proposal", expr.source());
                let e = template::propose(prompt, &instance.schema, seed, j, &mut rng)?;
                return Ok((e, Origin::TemplateFallback));
            }
            Ok((expr, origin))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let outcomes = ctx
        .sim
        .exec
        .map(&proposals, |(expr, _)| -> Result<UtilityFeatureDistribution, GeneratorError> {
            let table = expr.to_reward_table(instance)?;
            Ok(ctx.sim.run(instance, &table, &[], ctx.seeds)?.utility)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let candidates: Vec<Candidate> = proposals
        .into_iter()
        .zip(outcomes)
        .enumerate()
        .map(|(j, ((expression, origin), distribution))| Candidate {
            id: j,
            monotone: expression.is_monotone_on(instance),
            expression,
            round,
            proposal_index: j,
            origin,
            distribution,
        })
        .collect();
    let items: Vec<(&RewardExpression, &UtilityFeatureDistribution)> =
        candidates.iter().map(|c| (&c.expression, &c.distribution)).collect();
    let reflection = reflect(&items, prompt, cfg.reflect, ctx.llm, default, cfg.reflect_style)?;
    Ok((candidates, reflection))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_give_twenty_candidates() {
        let cfg = GeneratorConfig::default();
        assert_eq!((cfg.proposals_per_round, cfg.rounds), (4, 5));
        assert_eq!(cfg.pool_size(), 20);
        assert!(GeneratorConfig { rounds: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn pool_records_round_trip() {
        let r = PoolRecord {
            id: 3,
            source: "state * agent_feats[2]".into(),
            round: 1,
            proposal_index: 0,
            monotone_flag: true,
            origin: Some(Origin::Llm),
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with(r#"{"id":3,"source":"state * agent_feats[2]","round":1,"proposal_index":0,"monotone_flag":true"#));
        let back = parse_pool(&format!("{line}\n\n{line}\n")).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
        assert!(parse_pool("{not json").is_err());
    }
}

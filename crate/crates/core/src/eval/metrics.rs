use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dsl::RewardExpression;
use crate::generator::{PreferenceClause, PreferencePrompt};
use crate::rmab::{utility_distribution_diff, RewardTable, RmabInstance, Simulator, UtilityFeatureDistribution};

/// Percent changes of every prioritisation clause at one group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScores {
    pub k: usize,
    pub clauses: Vec<f64>,
    pub sum: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceMetrics {
    pub scores: Vec<KScores>,
    /// Mean EMD over the categories the prompt does not prioritise.
    pub shift: f64,
    /// Percent change of total utility against the default policy.
    pub utility_change: f64,
}

impl ChoiceMetrics {
    pub fn at(&self, k: usize) -> Option<&KScores> {
        self.scores.iter().find(|s| s.k == k)
    }
}

/// Metrics of one method's pick in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub dataset: usize,
    pub instance: usize,
    pub prompt: String,
    pub method: String,
    pub chosen: String,
    /// Position in the cell's base pool, when the pick came from it.
    pub candidate: Option<usize>,
    #[serde(flatten)]
    pub metrics: ChoiceMetrics,
}

fn pct(new: f64, base: f64, what: impl FnOnce() -> String) -> Result<f64, EvalError> {
    if base == 0.0 {
        return Err(EvalError::DegenerateGroup(what()));
    }
    Ok(100.0 * (new - base) / base)
}

/// Metrics of a policy's utility distribution against the default policy's.
pub fn score_distribution(
    dist: &UtilityFeatureDistribution,
    default: &UtilityFeatureDistribution,
    prompt: &PreferencePrompt,
    unprompted: &[&str],
    ks: &[usize],
) -> Result<ChoiceMetrics, EvalError> {
    let mut scores = Vec::with_capacity(ks.len());
    for &k in ks {
        if !(1..=3).contains(&k) {
            return Err(EvalError::InvalidK(k));
        }
        let mut clauses = Vec::new();
        for clause in &prompt.clauses {
            if let PreferenceClause::Prioritize { category, direction } = clause {
                let high = direction.is_high();
                let new = dist.category(category)?.extreme(k, high);
                let base = default.category(category)?.extreme(k, high);
                clauses.push(pct(new, base, || format!("{direction} {k} bucket(s) of {category}"))?);
            }
        }
        let sum = clauses.iter().sum();
        let min = clauses.iter().copied().fold(f64::INFINITY, f64::min);
        scores.push(KScores { k, sum, min: if clauses.is_empty() { 0.0 } else { min }, clauses });
    }
    let shift = if unprompted.is_empty() {
        0.0
    } else {
        let total = unprompted
            .iter()
            .map(|c| utility_distribution_diff(dist, default, c))
            .collect::<Result<Vec<_>, _>>()?
            .iter()
            .sum::<f64>();
        total / unprompted.len() as f64
    };
    let utility_change = pct(dist.total, default.total, || "total utility".into())?;
    Ok(ChoiceMetrics { scores, shift, utility_change })
}

/// Evaluates picks on one instance against the default policy, simulated
/// once on the evaluation seeds.
pub struct Evaluator<'a> {
    instance: &'a RmabInstance,
    seeds: &'a [u64],
    sim: Simulator<'a>,
    default: UtilityFeatureDistribution,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: &'a RmabInstance, seeds: &'a [u64], sim: Simulator<'a>) -> Result<Self, EvalError> {
        let table = RewardTable::default_reward(instance.n_arms());
        let default = sim.run(instance, &table, &[], seeds)?.utility;
        Ok(Self { instance, seeds, sim, default })
    }

    pub fn default_distribution(&self) -> &UtilityFeatureDistribution {
        &self.default
    }

    pub fn evaluate(&self, chosen: &RewardExpression, prompt: &PreferencePrompt, ks: &[usize]) -> Result<ChoiceMetrics, EvalError> {
        let table = chosen.to_reward_table(self.instance)?;
        let dist = self.sim.run(self.instance, &table, &[], self.seeds)?.utility;
        let unprompted = prompt.unprompted_categories(&self.instance.schema);
        score_distribution(&dist, &self.default, prompt, &unprompted, ks)
    }
}

/// One-off evaluation of `chosen` at group sizes `ks`.
pub fn evaluate_choice(
    chosen: &RewardExpression,
    prompt: &PreferencePrompt,
    instance: &RmabInstance,
    ks: &[usize],
    seeds: &[u64],
    sim: Simulator<'_>,
) -> Result<ChoiceMetrics, EvalError> {
    Evaluator::new(instance, seeds, sim)?.evaluate(chosen, prompt, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Direction;
    use crate::rmab::{CategoryUtility, FeatureSchema};

    fn dist(a: [f64; 3], b: [f64; 3]) -> UtilityFeatureDistribution {
        let cat = |name: &str, v: [f64; 3]| CategoryUtility {
            name: name.into(),
            buckets: vec!["1".into(), "2".into(), "3".into()],
            values: v.to_vec(),
        };
        UtilityFeatureDistribution { total: a.iter().sum(), categories: vec![cat("A", a), cat("B", b)] }
    }

    #[test]
    fn percent_change_sum_and_min() {
        let default = dist([100.0, 50.0, 50.0], [100.0, 50.0, 50.0]);
        let chosen = dist([110.0, 45.0, 50.0], [95.0, 50.0, 60.0]);
        let prompt = PreferencePrompt {
            clauses: vec![
                PreferenceClause::prioritize("A", Direction::Low),
                PreferenceClause::prioritize("B", Direction::Low),
            ],
        };
        let m = score_distribution(&chosen, &default, &prompt, &[], &[1, 2]).unwrap();
        let k1 = m.at(1).unwrap();
        assert!((k1.clauses[0] - 10.0).abs() < 1e-12);
        assert!((k1.clauses[1] + 5.0).abs() < 1e-12);
        assert!((k1.sum - 5.0).abs() < 1e-12);
        assert!((k1.min + 5.0).abs() < 1e-12);
        // k = 2: A 155 vs 150, B 145 vs 150
        let k2 = m.at(2).unwrap();
        assert!((k2.clauses[0] - 100.0 * 5.0 / 150.0).abs() < 1e-12);
        assert_eq!(m.shift, 0.0);
        assert!((m.utility_change - 2.5).abs() < 1e-12);
    }

    #[test]
    fn identical_distribution_scores_zero() {
        let d = dist([3.0, 1.0, 2.0], [1.0, 1.0, 4.0]);
        let prompt = PreferencePrompt::singular("A", Direction::High);
        let m = score_distribution(&d, &d, &prompt, &["B"], &[1, 2, 3]).unwrap();
        assert!(m.scores.iter().all(|s| s.clauses == vec![0.0] && s.sum == 0.0 && s.min == 0.0));
        assert_eq!((m.shift, m.utility_change), (0.0, 0.0));
    }

    #[test]
    fn degenerate_group_and_bad_k() {
        let default = dist([0.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        let prompt = PreferencePrompt::singular("A", Direction::Low);
        let err = score_distribution(&default, &default, &prompt, &[], &[1]).unwrap_err();
        assert!(matches!(err, EvalError::DegenerateGroup(_)));
        assert!(score_distribution(&default, &default, &prompt, &[], &[2]).is_ok());
        assert!(matches!(score_distribution(&default, &default, &prompt, &[], &[4]), Err(EvalError::InvalidK(4))));
    }

    #[test]
    fn shift_is_mean_over_unprompted() {
        let schema = FeatureSchema::synthetic(2, 3);
        let prompt = PreferencePrompt::singular("A", Direction::Low);
        assert_eq!(prompt.unprompted_categories(&schema), vec!["B"]);
        let default = dist([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        let moved = dist([1.0, 1.0, 1.0], [2.0, 1.0, 0.0]);
        let m = score_distribution(&moved, &default, &prompt, &["B"], &[1]).unwrap();
        let direct = utility_distribution_diff(&moved, &default, "B").unwrap();
        assert_eq!(m.shift, direct);
        assert!(m.shift > 0.0);
    }
}

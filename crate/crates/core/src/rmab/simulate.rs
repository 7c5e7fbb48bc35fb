use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_indices, RewardTable, RmabError, RmabInstance, SolverConfig, UtilityFeatureDistribution, WhittleCache,
    WhittleIndexSet,
};
use crate::par::Execution;

/// Seed-averaged results of running one index policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    /// Mean discounted total per accounting reward table.
    pub totals: Vec<f64>,
    /// Per-seed discounted totals, `per_seed[seed][table]`.
    pub per_seed: Vec<Vec<f64>>,
    /// Mean discounted good-state utility bucketed by feature.
    pub utility: UtilityFeatureDistribution,
    /// Arms whose Whittle index hit a bracket endpoint.
    pub flagged_arms: Vec<usize>,
}

/// Indices of the `k` arms with the highest index; ties go to the lowest arm id.
pub fn select_top_k(current: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..current.len()).collect();
    order.sort_by(|&a, &b| current[b].total_cmp(&current[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

struct SeedRun {
    totals: Vec<f64>,
    per_arm_utility: Vec<f64>,
}

fn run_seed(instance: &RmabInstance, indices: &WhittleIndexSet, accounting: &[RewardTable], seed: u64) -> SeedRun {
    let n = instance.n_arms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![1usize; n];
    let mut totals = vec![0.0; accounting.len()];
    let mut per_arm_utility = vec![0.0; n];
    let mut current = vec![0.0; n];
    let mut active = vec![0usize; n];
    let mut weight = 1.0;
    for _ in 0..instance.horizon {
        for (table, total) in accounting.iter().zip(totals.iter_mut()) {
            *total += weight * states.iter().zip(&table.values).map(|(&s, r)| r[s]).sum::<f64>();
        }
        for (u, &s) in per_arm_utility.iter_mut().zip(&states) {
            *u += weight * s as f64;
        }
        for i in 0..n {
            current[i] = indices.indices[i][states[i]];
        }
        active.iter_mut().for_each(|a| *a = 0);
        for i in select_top_k(&current, instance.budget) {
            active[i] = 1;
        }
        for i in 0..n {
            let p_good = instance.arms[i].transitions[states[i]][active[i]][1];
            states[i] = usize::from(rng.random::<f64>() < p_good);
        }
        weight *= instance.discount;
    }
    SeedRun { totals, per_arm_utility }
}

/// Runs the top-K policy defined by precomputed `indices`, accruing every
/// accounting table and the default-reward utility (accrue, act, transition).
/// All arms start in the good state.
pub fn simulate_with_indices(
    instance: &RmabInstance,
    indices: &WhittleIndexSet,
    accounting: &[RewardTable],
    seeds: &[u64],
    exec: Execution,
) -> Result<SimulationOutcome, RmabError> {
    if seeds.is_empty() {
        return Err(RmabError::NoSeeds);
    }
    let n = instance.n_arms();
    if indices.indices.len() != n {
        return Err(RmabError::TableLength { expected: n, got: indices.indices.len() });
    }
    if let Some(bad) = accounting.iter().find(|t| t.len() != n) {
        return Err(RmabError::TableLength { expected: n, got: bad.len() });
    }
    let runs = exec.map(seeds, |&seed| run_seed(instance, indices, accounting, seed));

    let count = runs.len() as f64;
    let mut totals = vec![0.0; accounting.len()];
    let mut per_arm = vec![0.0; n];
    for run in &runs {
        for (t, v) in totals.iter_mut().zip(&run.totals) {
            *t += v;
        }
        for (a, v) in per_arm.iter_mut().zip(&run.per_arm_utility) {
            *a += v;
        }
    }
    totals.iter_mut().for_each(|t| *t /= count);
    per_arm.iter_mut().for_each(|a| *a /= count);
    let features: Vec<&[u8]> = instance.arms.iter().map(|a| a.features.as_slice()).collect();
    let utility = UtilityFeatureDistribution::from_arm_utilities(&instance.schema, &features, &per_arm);
    Ok(SimulationOutcome {
        totals,
        per_seed: runs.into_iter().map(|r| r.totals).collect(),
        utility,
        flagged_arms: indices.flagged.clone(),
    })
}

/// Computes Whittle indices for `policy_rewards` and simulates the resulting
/// index policy.
pub fn simulate(
    instance: &RmabInstance,
    policy_rewards: &RewardTable,
    accounting: &[RewardTable],
    seeds: &[u64],
    cfg: &SolverConfig,
    cache: Option<&WhittleCache>,
    exec: Execution,
) -> Result<SimulationOutcome, RmabError> {
    if seeds.is_empty() {
        return Err(RmabError::NoSeeds);
    }
    let indices = compute_indices(instance, policy_rewards, cfg, cache, exec)?;
    simulate_with_indices(instance, &indices, accounting, seeds, exec)
}

/// Bundles solver settings, an optional shared cache and the execution mode.
#[derive(Clone, Copy)]
pub struct Simulator<'a> {
    pub cfg: SolverConfig,
    pub cache: Option<&'a WhittleCache>,
    pub exec: Execution,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: SolverConfig, cache: Option<&'a WhittleCache>, exec: Execution) -> Self {
        Self { cfg, cache, exec }
    }

    pub fn run(
        &self,
        instance: &RmabInstance,
        policy_rewards: &RewardTable,
        accounting: &[RewardTable],
        seeds: &[u64],
    ) -> Result<SimulationOutcome, RmabError> {
        simulate(instance, policy_rewards, accounting, seeds, &self.cfg, self.cache, self.exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmab::{ArmModel, FeatureSchema};

    fn small_instance(k: usize, t: usize) -> RmabInstance {
        let schema = FeatureSchema::synthetic(1, 3);
        let arms = vec![
            ArmModel::from_good_probs([[0.1, 0.6], [0.5, 0.9]], vec![1, 0, 0]),
            ArmModel::from_good_probs([[0.3, 0.4], [0.2, 0.8]], vec![0, 1, 0]),
            ArmModel::from_good_probs([[0.05, 0.9], [0.7, 0.75]], vec![0, 0, 1]),
        ];
        RmabInstance::new(arms, k, t, 0.9, schema).unwrap()
    }

    #[test]
    fn top_k_tie_break_lowest_id() {
        assert_eq!(select_top_k(&[1.0, 2.0, 2.0, 0.5], 2), vec![1, 2]);
        assert_eq!(select_top_k(&[0.0, 0.0, 0.0], 2), vec![0, 1]);
    }

    #[test]
    fn single_step_total_is_arm_count() {
        let inst = small_instance(1, 1);
        let r = RewardTable::default_reward(3);
        let out = simulate(&inst, &r, std::slice::from_ref(&r), &[1, 2, 3], &SolverConfig::default(), None, Execution::Sequential)
            .unwrap();
        assert_eq!(out.totals, vec![3.0]);
        assert_eq!(out.utility.total, 3.0);
    }

    #[test]
    fn full_budget_pulls_every_arm() {
        // with K = N every arm follows its active row; compare against an
        // instance whose passive rows were overwritten by the active ones
        let inst = small_instance(3, 6);
        let mut forced = inst.clone();
        for arm in forced.arms.iter_mut() {
            for s in 0..2 {
                arm.transitions[s][0] = arm.transitions[s][1];
            }
        }
        let r = RewardTable::default_reward(3);
        let seeds: Vec<u64> = (0..20).collect();
        let a = simulate(&inst, &r, std::slice::from_ref(&r), &seeds, &SolverConfig::default(), None, Execution::Sequential).unwrap();
        let idx = WhittleIndexSet::from_indices(vec![[0.0, 0.0]; 3]);
        let b = simulate_with_indices(&forced, &idx, &[r], &seeds, Execution::Sequential).unwrap();
        assert_eq!(a.per_seed, b.per_seed);
    }

    #[test]
    fn reruns_are_bit_identical_and_cache_transparent() {
        let inst = small_instance(1, 8);
        let r = RewardTable::new(vec![[0.0, 1.0], [0.0, 2.5], [0.2, 0.7]]).unwrap();
        let seeds: Vec<u64> = (100..140).collect();
        let cfg = SolverConfig::default();
        let cache = WhittleCache::new(cfg);
        let plain = simulate(&inst, &r, std::slice::from_ref(&r), &seeds, &cfg, None, Execution::Sequential).unwrap();
        let cached = simulate(&inst, &r, std::slice::from_ref(&r), &seeds, &cfg, Some(&cache), Execution::Parallel).unwrap();
        let again = simulate(&inst, &r, std::slice::from_ref(&r), &seeds, &cfg, Some(&cache), Execution::Parallel).unwrap();
        assert_eq!(plain, cached);
        assert_eq!(cached, again);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let inst = small_instance(1, 2);
        let r = RewardTable::default_reward(3);
        let cfg = SolverConfig::default();
        assert_eq!(simulate(&inst, &r, &[], &[], &cfg, None, Execution::Sequential).unwrap_err(), RmabError::NoSeeds);
        let short = RewardTable::default_reward(2);
        assert!(matches!(
            simulate(&inst, &r, &[short], &[1], &cfg, None, Execution::Sequential),
            Err(RmabError::TableLength { .. })
        ));
    }
}

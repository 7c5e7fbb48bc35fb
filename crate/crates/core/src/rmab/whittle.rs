use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{q_values, ArmModel, RewardTable, RmabError, RmabInstance, SolverConfig};
use crate::par::Execution;

const BRACKET_DOUBLINGS: usize = 4;
const CACHE_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhittleOutcome {
    pub index: f64,
    /// False when the passive/active indifference point was not inside the
    /// (expanded) bracket; `index` is then the nearest bracket endpoint.
    pub bracketed: bool,
}

/// `Q(s,0,subsidy) - Q(s,1,subsidy)`: positive once passivity is preferred.
fn advantage_of_passive(
    arm: &ArmModel,
    rewards: [f64; 2],
    state: usize,
    subsidy: f64,
    discount: f64,
    cfg: &SolverConfig,
) -> Result<f64, RmabError> {
    let q = q_values(arm, rewards, subsidy, discount, cfg)?;
    Ok(q[state][0] - q[state][1])
}

/// Whittle index of `state` by bisection on the subsidy.
///
/// The initial bracket is `±max|r| / (1 - discount)` (or `max|r| * horizon`
/// when undiscounted), doubled up to four times if it does not contain the
/// indifference point.
pub fn whittle_index(
    arm: &ArmModel,
    rewards: [f64; 2],
    state: usize,
    discount: f64,
    cfg: &SolverConfig,
) -> Result<WhittleOutcome, RmabError> {
    if state > 1 {
        return Err(RmabError::InvalidInput(format!("state {state} is not 0 or 1")));
    }
    if !(cfg.bs_tol > 0.0) {
        return Err(RmabError::InvalidInput(format!("bs_tol must be positive, got {}", cfg.bs_tol)));
    }
    let span = rewards[0].abs().max(rewards[1].abs());
    let scale = if discount < 1.0 {
        1.0 / (1.0 - discount)
    } else {
        cfg.finite_horizon.unwrap_or(1) as f64
    };
    let half = (span * scale).max(cfg.bs_tol);
    let (mut lo, mut hi) = (-half, half);
    let gap = |lam: f64| advantage_of_passive(arm, rewards, state, lam, discount, cfg);

    let mut g_lo = gap(lo)?;
    let mut g_hi = gap(hi)?;
    let mut doublings = 0;
    while (g_lo > 0.0 || g_hi < 0.0) && doublings < BRACKET_DOUBLINGS {
        lo *= 2.0;
        hi *= 2.0;
        g_lo = gap(lo)?;
        g_hi = gap(hi)?;
        doublings += 1;
    }
    if g_hi < 0.0 {
        log::warn!("whittle root not bracketed (active preferred at subsidy {hi}); using endpoint");
        return Ok(WhittleOutcome { index: hi, bracketed: false });
    }
    if g_lo > 0.0 {
        log::warn!("whittle root not bracketed (passive preferred at subsidy {lo}); using endpoint");
        return Ok(WhittleOutcome { index: lo, bracketed: false });
    }
    while hi - lo > cfg.bs_tol {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(WhittleOutcome { index: 0.5 * (lo + hi), bracketed: true })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    transitions: [u64; 8],
    rewards: [u64; 2],
    discount: u64,
}

fn quantize(x: f64) -> u64 {
    ((x / CACHE_QUANTUM).round() * CACHE_QUANTUM).to_bits()
}

impl CacheKey {
    fn new(arm: &ArmModel, rewards: [f64; 2], discount: f64) -> Self {
        let mut transitions = [0u64; 8];
        for s in 0..2 {
            for a in 0..2 {
                for n in 0..2 {
                    transitions[s * 4 + a * 2 + n] = quantize(arm.transitions[s][a][n]);
                }
            }
        }
        Self { transitions, rewards: [quantize(rewards[0]), quantize(rewards[1])], discount: discount.to_bits() }
    }
}

/// Memo of per-arm index pairs keyed by (transitions, rewards) quantised to
/// 1e-9. Safe to share across threads; the solver config must not change
/// over the cache's lifetime.
pub struct WhittleCache {
    cfg: SolverConfig,
    map: RwLock<HashMap<CacheKey, [WhittleOutcome; 2]>>,
}

impl WhittleCache {
    pub fn new(cfg: SolverConfig) -> Self {
        Self { cfg, map: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("whittle cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(
        &self,
        arm: &ArmModel,
        rewards: [f64; 2],
        discount: f64,
    ) -> Result<[WhittleOutcome; 2], RmabError> {
        let key = CacheKey::new(arm, rewards, discount);
        if let Some(hit) = self.map.read().expect("whittle cache poisoned").get(&key) {
            return Ok(*hit);
        }
        let value = index_pair(arm, rewards, discount, &self.cfg)?;
        let mut map = self.map.write().expect("whittle cache poisoned");
        Ok(*map.entry(key).or_insert(value))
    }
}

fn index_pair(arm: &ArmModel, rewards: [f64; 2], discount: f64, cfg: &SolverConfig) -> Result<[WhittleOutcome; 2], RmabError> {
    Ok([whittle_index(arm, rewards, 0, discount, cfg)?, whittle_index(arm, rewards, 1, discount, cfg)?])
}

/// Whittle indices `W_i(s)` for every arm of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhittleIndexSet {
    pub indices: Vec<[f64; 2]>,
    /// Arms with at least one state whose index could not be bracketed.
    pub flagged: Vec<usize>,
}

impl WhittleIndexSet {
    pub fn from_indices(indices: Vec<[f64; 2]>) -> Self {
        Self { indices, flagged: Vec::new() }
    }
}

pub fn compute_indices(
    instance: &RmabInstance,
    rewards: &RewardTable,
    cfg: &SolverConfig,
    cache: Option<&WhittleCache>,
    exec: Execution,
) -> Result<WhittleIndexSet, RmabError> {
    if rewards.len() != instance.n_arms() {
        return Err(RmabError::TableLength { expected: instance.n_arms(), got: rewards.len() });
    }
    let finite_cfg = SolverConfig { finite_horizon: cfg.finite_horizon.or(Some(instance.horizon)), ..*cfg };
    let pairs = exec.map_range(instance.n_arms(), |i| {
        let arm = &instance.arms[i];
        let r = rewards.values[i];
        match cache {
            Some(c) => c.get_or_compute(arm, r, instance.discount),
            None => index_pair(arm, r, instance.discount, &finite_cfg),
        }
    });
    let mut indices = Vec::with_capacity(pairs.len());
    let mut flagged = Vec::new();
    for (i, pair) in pairs.into_iter().enumerate() {
        let pair = pair?;
        if !(pair[0].bracketed && pair[1].bracketed) {
            flagged.push(i);
        }
        indices.push([pair[0].index, pair[1].index]);
    }
    Ok(WhittleIndexSet { indices, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmab::FeatureSchema;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_arm(rng: &mut impl Rng) -> ArmModel {
        let p = [[rng.random(), rng.random()], [rng.random(), rng.random()]];
        ArmModel::from_good_probs(p, vec![1])
    }

    #[test]
    fn zero_when_pulling_has_no_effect() {
        let arm = ArmModel::from_good_probs([[0.25, 0.25], [0.6, 0.6]], vec![1]);
        let cfg = SolverConfig::default();
        for s in 0..2 {
            let w = whittle_index(&arm, [0.0, 1.0], s, 0.9, &cfg).unwrap();
            assert!(w.bracketed);
            assert!(w.index.abs() <= cfg.bs_tol, "W({s}) = {}", w.index);
        }
    }

    #[test]
    fn zero_for_zero_reward() {
        let arm = ArmModel::from_good_probs([[0.1, 0.7], [0.4, 0.95]], vec![1]);
        let cfg = SolverConfig::default();
        for s in 0..2 {
            let w = whittle_index(&arm, [0.0, 0.0], s, 0.9, &cfg).unwrap();
            assert!(w.index.abs() <= cfg.bs_tol);
        }
    }

    #[test]
    fn monotonicity_probe_around_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SolverConfig::default();
        let delta = 10.0 * cfg.bs_tol;
        for _ in 0..300 {
            let arm = random_arm(&mut rng);
            let r = [rng.random::<f64>(), rng.random::<f64>()];
            for s in 0..2 {
                let w = whittle_index(&arm, r, s, 0.9, &cfg).unwrap();
                assert!(w.bracketed);
                let above = q_values(&arm, r, w.index + delta, 0.9, &cfg).unwrap();
                let below = q_values(&arm, r, w.index - delta, 0.9, &cfg).unwrap();
                assert!(above[s][0] >= above[s][1] - 1e-12);
                assert!(below[s][0] <= below[s][1] + 1e-12);
            }
        }
    }

    #[test]
    fn positive_scaling_scales_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = SolverConfig { bs_tol: 1e-7, ..Default::default() };
        for _ in 0..50 {
            let arm = random_arm(&mut rng);
            let r = [rng.random::<f64>(), 1.0 + rng.random::<f64>()];
            for c in [0.5, 3.0] {
                for s in 0..2 {
                    let w = whittle_index(&arm, r, s, 0.9, &cfg).unwrap().index;
                    let wc = whittle_index(&arm, [r[0] * c, r[1] * c], s, 0.9, &cfg).unwrap().index;
                    assert!((wc - c * w).abs() < 1e-5 * c.max(1.0), "{wc} vs {}", c * w);
                }
            }
        }
    }

    #[test]
    fn cache_hit_equals_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SolverConfig::default();
        let cache = WhittleCache::new(cfg);
        for _ in 0..20 {
            let arm = random_arm(&mut rng);
            let r = [0.0, rng.random::<f64>()];
            let first = cache.get_or_compute(&arm, r, 0.9).unwrap();
            let second = cache.get_or_compute(&arm, r, 0.9).unwrap();
            let fresh = index_pair(&arm, r, 0.9, &cfg).unwrap();
            for s in 0..2 {
                assert_eq!(first[s].index.to_bits(), fresh[s].index.to_bits());
                assert_eq!(second[s].index.to_bits(), fresh[s].index.to_bits());
            }
        }
        assert_eq!(cache.len(), 20);
    }

    #[test]
    fn index_set_rejects_length_mismatch() {
        let schema = FeatureSchema::synthetic(1, 1);
        let arm = ArmModel::from_good_probs([[0.2, 0.5], [0.5, 0.9]], vec![1]);
        let inst = RmabInstance::new(vec![arm.clone(), arm], 1, 3, 0.9, schema).unwrap();
        let bad = RewardTable::default_reward(3);
        let err = compute_indices(&inst, &bad, &SolverConfig::default(), None, Execution::Sequential).unwrap_err();
        assert_eq!(err, RmabError::TableLength { expected: 2, got: 3 });
    }
}

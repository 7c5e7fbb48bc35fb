use serde::{Deserialize, Serialize};

use super::{ArmModel, RmabError};

/// `Q[s][a]` for a single arm at a fixed subsidy.
pub type QTable = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Exact two-state policy iteration (2x2 linear solves). Default.
    PolicyIteration,
    /// Plain value iteration stopped by `vi_tol`.
    ValueIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub vi_tol: f64,
    pub bs_tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    /// Number of backward-induction steps used when the discount is 1.
    #[serde(default)]
    pub finite_horizon: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { vi_tol: 1e-6, bs_tol: 1e-4, max_iter: 10_000, method: SolveMethod::PolicyIteration, finite_horizon: None }
    }
}

/// Solves the subsidised single-arm Bellman equation
/// `Q(s,a) = r(s) + subsidy*[a=0] + discount * sum_s' P(s,a,s') max_a' Q(s',a')`.
pub fn q_values(
    arm: &ArmModel,
    rewards: [f64; 2],
    subsidy: f64,
    discount: f64,
    cfg: &SolverConfig,
) -> Result<QTable, RmabError> {
    if rewards.iter().any(|r| !r.is_finite()) || !subsidy.is_finite() {
        return Err(RmabError::InvalidInput(format!("non-finite reward {rewards:?} or subsidy {subsidy}")));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(RmabError::InvalidInput(format!("discount {discount} outside [0,1]")));
    }
    if discount >= 1.0 {
        let steps = cfg.finite_horizon.ok_or_else(|| {
            RmabError::InvalidInput("undiscounted solve needs a finite horizon".into())
        })?;
        return Ok(backward_induction(arm, rewards, subsidy, steps));
    }
    if !(cfg.vi_tol > 0.0) {
        return Err(RmabError::InvalidInput(format!("vi_tol must be positive, got {}", cfg.vi_tol)));
    }
    match cfg.method {
        SolveMethod::PolicyIteration => policy_iteration(arm, rewards, subsidy, discount, cfg.max_iter),
        SolveMethod::ValueIteration => value_iteration(arm, rewards, subsidy, discount, cfg.vi_tol, cfg.max_iter),
    }
}

#[inline]
fn backup(arm: &ArmModel, rewards: [f64; 2], subsidy: f64, discount: f64, v: [f64; 2]) -> QTable {
    let mut q = [[0.0; 2]; 2];
    for s in 0..2 {
        for a in 0..2 {
            let p = &arm.transitions[s][a];
            let passive = if a == 0 { subsidy } else { 0.0 };
            q[s][a] = rewards[s] + passive + discount * (p[0] * v[0] + p[1] * v[1]);
        }
    }
    q
}

#[inline]
fn greedy_value(q: &QTable) -> [f64; 2] {
    [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])]
}

fn backward_induction(arm: &ArmModel, rewards: [f64; 2], subsidy: f64, steps: usize) -> QTable {
    let mut v = [0.0; 2];
    let mut q = [[0.0; 2]; 2];
    for _ in 0..steps.max(1) {
        q = backup(arm, rewards, subsidy, 1.0, v);
        v = greedy_value(&q);
    }
    q
}

fn value_iteration(
    arm: &ArmModel,
    rewards: [f64; 2],
    subsidy: f64,
    discount: f64,
    vi_tol: f64,
    max_iter: usize,
) -> Result<QTable, RmabError> {
    // ||Q_{k+1} - Q*|| <= discount/(1-discount) * ||Q_{k+1} - Q_k||
    let stop = if discount > 0.0 { vi_tol * (1.0 - discount) / discount } else { f64::INFINITY };
    let mut q = [[0.0; 2]; 2];
    let mut delta = f64::INFINITY;
    for _ in 0..max_iter {
        let next = backup(arm, rewards, subsidy, discount, greedy_value(&q));
        delta = sup_diff(&next, &q);
        q = next;
        if delta <= stop {
            return Ok(q);
        }
    }
    Err(RmabError::Convergence { iterations: max_iter, last_delta: delta })
}

fn policy_iteration(
    arm: &ArmModel,
    rewards: [f64; 2],
    subsidy: f64,
    discount: f64,
    max_iter: usize,
) -> Result<QTable, RmabError> {
    let mut policy = [0usize; 2];
    for _ in 0..max_iter.max(1) {
        let v = evaluate_policy(arm, rewards, subsidy, discount, policy);
        let q = backup(arm, rewards, subsidy, discount, v);
        let mut improved = policy;
        for s in 0..2 {
            let other = 1 - policy[s];
            if q[s][other] > q[s][policy[s]] {
                improved[s] = other;
            }
        }
        if improved == policy {
            return Ok(q);
        }
        policy = improved;
    }
    Err(RmabError::Convergence { iterations: max_iter, last_delta: f64::NAN })
}

/// Exact value of a stationary deterministic policy: solves `(I - discount P_pi) v = r_pi`.
fn evaluate_policy(arm: &ArmModel, rewards: [f64; 2], subsidy: f64, discount: f64, policy: [usize; 2]) -> [f64; 2] {
    let p0 = arm.transitions[0][policy[0]];
    let p1 = arm.transitions[1][policy[1]];
    let b0 = rewards[0] + if policy[0] == 0 { subsidy } else { 0.0 };
    let b1 = rewards[1] + if policy[1] == 0 { subsidy } else { 0.0 };
    let (m00, m01) = (1.0 - discount * p0[0], -discount * p0[1]);
    let (m10, m11) = (-discount * p1[0], 1.0 - discount * p1[1]);
    let det = m00 * m11 - m01 * m10;
    [(b0 * m11 - m01 * b1) / det, (m00 * b1 - m10 * b0) / det]
}

fn sup_diff(a: &QTable, b: &QTable) -> f64 {
    let mut m: f64 = 0.0;
    for s in 0..2 {
        for act in 0..2 {
            m = m.max((a[s][act] - b[s][act]).abs());
        }
    }
    m
}

#[cfg(test)]
pub(crate) fn bellman_residual(arm: &ArmModel, rewards: [f64; 2], subsidy: f64, discount: f64, q: &QTable) -> f64 {
    sup_diff(&backup(arm, rewards, subsidy, discount, greedy_value(q)), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_arm(rng: &mut impl Rng) -> ArmModel {
        let p = [[rng.random(), rng.random()], [rng.random(), rng.random()]];
        ArmModel::from_good_probs(p, vec![1])
    }

    /// Long-run value iteration, independent of the solver's stopping rule.
    fn vi_oracle(arm: &ArmModel, r: [f64; 2], lam: f64, g: f64) -> QTable {
        let mut q: QTable = [[0.0; 2]; 2];
        loop {
            let mut next: QTable = [[0.0; 2]; 2];
            for s in 0..2 {
                for a in 0..2 {
                    let mut ev = 0.0;
                    for s2 in 0..2 {
                        ev += arm.transitions[s][a][s2] * q[s2][0].max(q[s2][1]);
                    }
                    next[s][a] = r[s] + if a == 0 { lam } else { 0.0 } + g * ev;
                }
            }
            let d = sup_diff(&next, &q);
            q = next;
            if d < 1e-12 {
                return q;
            }
        }
    }

    #[test]
    fn myopic_when_undiscounted_lookahead_is_zero() {
        let arm = ArmModel::from_good_probs([[0.3, 0.6], [0.4, 0.8]], vec![1]);
        let q = q_values(&arm, [0.0, 1.0], 0.7, 0.0, &SolverConfig::default()).unwrap();
        for s in 0..2 {
            assert!((q[s][0] - (s as f64 + 0.7)).abs() < 1e-12);
            assert!((q[s][1] - s as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_make_actions_indistinguishable() {
        let arm = ArmModel::from_good_probs([[0.3, 0.3], [0.8, 0.8]], vec![1]);
        for method in [SolveMethod::PolicyIteration, SolveMethod::ValueIteration] {
            let cfg = SolverConfig { method, ..Default::default() };
            let q = q_values(&arm, [0.0, 1.0], 0.0, 0.9, &cfg).unwrap();
            for s in 0..2 {
                assert!((q[s][0] - q[s][1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_long_run_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let arm = random_arm(&mut rng);
            let r = [rng.random::<f64>(), rng.random::<f64>()];
            let lam = rng.random_range(-3.0..3.0);
            let oracle = vi_oracle(&arm, r, lam, 0.9);
            for method in [SolveMethod::PolicyIteration, SolveMethod::ValueIteration] {
                let cfg = SolverConfig { method, ..Default::default() };
                let q = q_values(&arm, r, lam, 0.9, &cfg).unwrap();
                assert!(sup_diff(&q, &oracle) < 1e-6, "{method:?}: {q:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn residual_below_tolerance_for_both_methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let arm = random_arm(&mut rng);
            let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let lam = rng.random_range(-5.0..5.0);
            for method in [SolveMethod::PolicyIteration, SolveMethod::ValueIteration] {
                let cfg = SolverConfig { method, ..Default::default() };
                let q = q_values(&arm, r, lam, 0.9, &cfg).unwrap();
                assert!(bellman_residual(&arm, r, lam, 0.9, &q) < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_non_finite_rewards() {
        let arm = ArmModel::from_good_probs([[0.3, 0.6], [0.4, 0.8]], vec![1]);
        let err = q_values(&arm, [f64::NAN, 1.0], 0.0, 0.9, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, RmabError::InvalidInput(_)));
    }

    #[test]
    fn value_iteration_reports_iteration_cap() {
        let arm = ArmModel::from_good_probs([[0.3, 0.6], [0.4, 0.8]], vec![1]);
        let cfg = SolverConfig { method: SolveMethod::ValueIteration, max_iter: 3, ..Default::default() };
        let err = q_values(&arm, [0.0, 1.0], 0.0, 0.99, &cfg).unwrap_err();
        assert!(matches!(err, RmabError::Convergence { iterations: 3, .. }));
    }

    #[test]
    fn undiscounted_needs_horizon() {
        let arm = ArmModel::from_good_probs([[0.3, 0.6], [0.4, 0.8]], vec![1]);
        assert!(q_values(&arm, [0.0, 1.0], 0.0, 1.0, &SolverConfig::default()).is_err());
        let cfg = SolverConfig { finite_horizon: Some(1), ..Default::default() };
        let q = q_values(&arm, [0.0, 1.0], 0.5, 1.0, &cfg).unwrap();
        assert_eq!(q, [[0.5, 0.0], [1.5, 1.0]]);
    }
}

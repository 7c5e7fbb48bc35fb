use sclm_core::adjudicator::{score_prompt, shift_score, simulate_pool, simulator_score, ScorerKind};
use sclm_core::datagen::{generate_instance, DatasetConfig};
use sclm_core::dsl::RewardExpression;
use sclm_core::par::Execution;
use sclm_core::rmab::{
    emd_1d, select_top_k, simulate_with_indices, ArmModel, FeatureSchema, RewardTable, RmabInstance, Simulator,
    SolverConfig, WhittleCache, WhittleIndexSet,
};

fn tiny_instance(budget: usize, horizon: usize) -> RmabInstance {
    let schema = FeatureSchema::synthetic(1, 3);
    let probs = [[[0.2, 0.7], [0.5, 0.9]], [[0.1, 0.4], [0.6, 0.95]], [[0.3, 0.35], [0.8, 0.85]]];
    let arms = probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f = vec![0u8; 3];
            f[i] = 1;
            ArmModel::from_good_probs(*p, f)
        })
        .collect();
    RmabInstance::new(arms, budget, horizon, 0.9, schema).unwrap()
}

/// Exact expected discounted good-state count by propagating the joint state
/// distribution.
fn exact_total(inst: &RmabInstance, indices: &WhittleIndexSet) -> f64 {
    let n = inst.n_arms();
    let mut dist = vec![0.0; 1 << n];
    dist[(1 << n) - 1] = 1.0;
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..inst.horizon {
        let mut next = vec![0.0; 1 << n];
        for (joint, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let states: Vec<usize> = (0..n).map(|i| (joint >> i) & 1).collect();
            total += weight * p * states.iter().sum::<usize>() as f64;
            let current: Vec<f64> = (0..n).map(|i| indices.indices[i][states[i]]).collect();
            let chosen = select_top_k(&current, inst.budget);
            for (to, slot) in next.iter_mut().enumerate() {
                let mut q = p;
                for i in 0..n {
                    let a = usize::from(chosen.contains(&i));
                    q *= inst.arms[i].p(states[i], a, (to >> i) & 1);
                }
                *slot += q;
            }
        }
        dist = next;
        weight *= inst.discount;
    }
    total
}

#[test]
fn monte_carlo_matches_exact_expectation() {
    let inst = tiny_instance(1, 4);
    let cases = [
        WhittleIndexSet::from_indices(vec![[0.1, 0.5], [0.3, 0.2], [0.0, 0.4]]),
        // all tied: the lowest arm id is always pulled
        WhittleIndexSet::from_indices(vec![[1.0, 1.0]; 3]),
    ];
    let seeds: Vec<u64> = (0..40_000).collect();
    for indices in &cases {
        let table = RewardTable::default_reward(3);
        let out = simulate_with_indices(&inst, indices, &[table], &seeds, Execution::Parallel).unwrap();
        let n = seeds.len() as f64;
        let mean = out.totals[0];
        let var = out.per_seed.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let exact = exact_total(&inst, indices);
        assert!((mean - exact).abs() < 4.0 * se, "simulated {mean} vs exact {exact} (se {se})");
        assert!((out.utility.total - mean).abs() < 1e-9);
    }
}

#[test]
fn parallel_and_sequential_simulation_agree() {
    let cfg = DatasetConfig { n_arms: 60, budget: 6, ..DatasetConfig::desk(2, 1).unwrap() };
    let inst = generate_instance(&cfg, 17).unwrap().instance;
    let expr = RewardExpression::parse("state + 2*state*agent_feats[3]", inst.schema.len()).unwrap();
    let table = expr.to_reward_table(&inst).unwrap();
    let seeds = [5, 6, 7, 8];
    let run = |exec| Simulator::new(SolverConfig::default(), None, exec).run(&inst, &table, std::slice::from_ref(&table), &seeds).unwrap();
    assert_eq!(run(Execution::Parallel), run(Execution::Sequential));

    let cache = WhittleCache::new(SolverConfig::default());
    let cached = Simulator::new(SolverConfig::default(), Some(&cache), Execution::Parallel);
    let first = cached.run(&inst, &table, std::slice::from_ref(&table), &seeds).unwrap();
    let second = cached.run(&inst, &table, std::slice::from_ref(&table), &seeds).unwrap();
    assert_eq!(first, run(Execution::Parallel));
    assert_eq!(first, second);
}

#[test]
fn scorers_on_known_pools() {
    let cfg = DatasetConfig { n_arms: 50, budget: 5, ..DatasetConfig::desk(1, 2).unwrap() };
    let inst = generate_instance(&cfg, 3).unwrap().instance;
    let n = inst.schema.len();
    let srcs = ["state", "state * agent_feats[0]", "state", "state + 3*state*agent_feats[9]"];
    let exprs: Vec<RewardExpression> = srcs.iter().map(|s| RewardExpression::parse(s, n).unwrap()).collect();
    let accounting = [RewardTable::default_reward(inst.n_arms())];
    let sim = Simulator::new(SolverConfig::default(), None, Execution::Parallel);
    let pool = simulate_pool(&inst, &exprs, &accounting, &[1, 2, 3], &sim).unwrap();

    // the default reward reproduces the default policy exactly
    let col = simulator_score("A:high", &pool, 0).unwrap();
    assert_eq!(col.normalized[0], 0.0);
    assert_eq!(col.normalized[0], col.normalized[2]);
    assert!(simulator_score("A:high", &pool, 1).is_err());

    // shift scores are a decreasing function of the raw EMD
    let shift = shift_score("noshift:B", &pool, "B").unwrap();
    let emd: Vec<f64> = pool
        .candidates
        .iter()
        .map(|c| emd_1d(&c.utility.category("B").unwrap().values, &pool.default.utility.category("B").unwrap().values).unwrap())
        .collect();
    assert_eq!(emd[0], 0.0);
    for i in 0..4 {
        for j in 0..4 {
            if emd[i] < emd[j] {
                assert!(shift.normalized[i] > shift.normalized[j], "{emd:?} vs {:?}", shift.normalized);
            }
        }
    }

    let prompt = "A:high+noshift:B".parse().unwrap();
    let missing = score_prompt(&prompt, &pool, &[], ScorerKind::Simulator, None);
    assert!(missing.is_err());
    let m = score_prompt(&prompt, &pool, &[Some(0), None], ScorerKind::Simulator, None).unwrap();
    assert_eq!(m.n_candidates, 4);
    assert_eq!(m.columns.len(), 2);
}

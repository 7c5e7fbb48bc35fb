use super::*;
use crate::rmab::{ArmModel, FeatureSchema};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Expressions that appear verbatim in generator/reflection transcripts.
const TRANSCRIPT_EXPRESSIONS: &[&str] = &[
    "2*state + state*(1*agent_feats[0] + 0.5*agent_feats[1])",
    "2*state + state * (1*agent_feats[0]+ 0.5*agent_feats[1])",
    "state * (agent_feats[0] and not (agent_feats[1] or agent_feats[2]))",
    "state+state * ((agent_feats[0] or agent_feats[1]) and (agent_feats[17] or agent_feats[18] or agent_feats[19]))",
    "state * (agent_feats[0] or 3*agent_feats[19])",
    "state + 2*state * ((5*agent_feats[0]+agent_feats[1]) and agent_feats[19])",
    "state * (agent_feats[4] and agent_feats[18])",
    "state * agent_feats[7]",
    "state * agent_feats[10]",
    "-agent_feats[5] -agent_feats[6]-agent_feats[7]-agent_feats[8]-agent_feats[9]-agent_feats[10]-agent_feats[11]",
    "state * (agent_feats[0] or agent_feats[1]) and (agent_feats[5] or agent_feats[6])",
    "state * (agent_feats[0] or agent_feats[1]) * (agent_feats[5] or agent_feats[6])",
];

fn onehot(n: usize, hot: &[usize]) -> Vec<u8> {
    let mut v = vec![0u8; n];
    for &h in hot {
        v[h] = 1;
    }
    v
}

#[test]
fn transcript_expressions_parse() {
    for src in TRANSCRIPT_EXPRESSIONS {
        let e = RewardExpression::parse(src, 20).unwrap_or_else(|err| panic!("{src}: {err}"));
        assert_eq!(RewardExpression::parse(&e.render(), 20).unwrap().ast(), e.ast());
    }
    let e = RewardExpression::parse("state * (agent_feats[4] and agent_feats[18])", 19).unwrap();
    assert_eq!(e.indices().into_iter().collect::<Vec<_>>(), vec![4, 18]);
}

#[test]
fn known_values() {
    let e = RewardExpression::parse("2*state + state*(1*agent_feats[0] + 0.5*agent_feats[1])", 15).unwrap();
    assert_eq!(e.evaluate(1, &onehot(15, &[0])), 3.0);
    assert_eq!(e.evaluate(1, &onehot(15, &[1])), 2.5);
    assert_eq!(e.evaluate(0, &onehot(15, &[0])), 0.0);

    let or = RewardExpression::parse("agent_feats[0] or 3*agent_feats[1]", 2).unwrap();
    assert_eq!(or.evaluate(0, &[0, 1]), 3.0);
    assert_eq!(or.evaluate(0, &[1, 1]), 1.0);
    assert_eq!(or.evaluate(0, &[0, 0]), 0.0);

    let and = RewardExpression::parse("2 and 0.5", 0).unwrap();
    assert_eq!(and.evaluate(0, &[]), 0.5);
    let and0 = RewardExpression::parse("0 and 7", 0).unwrap();
    assert_eq!(and0.evaluate(0, &[]), 0.0);

    let not = RewardExpression::parse("not state", 0).unwrap();
    assert_eq!(not.evaluate(0, &[]), 1.0);
    assert_eq!(not.evaluate(1, &[]), 0.0);
}

#[test]
fn precedence_follows_python() {
    // unary minus binds tighter than *, which binds tighter than +
    let e = RewardExpression::parse("-2*3 + 1", 0).unwrap();
    assert_eq!(e.evaluate(0, &[]), -5.0);
    // not binds looser than arithmetic: not (1 - 1)
    let e = RewardExpression::parse("not 1 - 1", 0).unwrap();
    assert_eq!(e.evaluate(0, &[]), 1.0);
    // and binds tighter than or
    let e = RewardExpression::parse("0 or 2 and 3", 0).unwrap();
    assert_eq!(e.evaluate(0, &[]), 3.0);
    let e = RewardExpression::parse("5 - 2 - 1", 0).unwrap();
    assert_eq!(e.evaluate(0, &[]), 2.0);
}

#[test]
fn rejects_bad_input() {
    assert_eq!(
        RewardExpression::parse("state + agent_feats[99]", 15).unwrap_err(),
        DslError::IndexOutOfRange { index: 99, n_features: 15 }
    );
    assert!(matches!(RewardExpression::parse("return state", 15), Err(DslError::Disallowed { pos: 0, .. })));
    assert!(matches!(RewardExpression::parse("max(state, 1)", 15), Err(DslError::Disallowed { .. })));
    assert!(matches!(RewardExpression::parse("state + x", 15), Err(DslError::Disallowed { pos: 8, .. })));
    assert!(matches!(RewardExpression::parse("state / 2", 15), Err(DslError::Disallowed { .. })));
    assert!(matches!(RewardExpression::parse("", 15), Err(DslError::Syntax { .. })));
    assert!(matches!(RewardExpression::parse("state +", 15), Err(DslError::Syntax { pos: 7, .. })));
    assert!(matches!(RewardExpression::parse("(state", 15), Err(DslError::Syntax { .. })));
    assert!(matches!(RewardExpression::parse("state state", 15), Err(DslError::Syntax { pos: 6, .. })));
    assert!(matches!(RewardExpression::parse("agent_feats[1.5]", 15), Err(DslError::Syntax { .. })));
    assert!(matches!(RewardExpression::parse("agent_feats[-1]", 15), Err(DslError::Syntax { .. })));
    assert!(matches!(RewardExpression::parse("state ** 2", 15), Err(DslError::Syntax { .. })));
    assert!(matches!(RewardExpression::parse("state and", 15), Err(DslError::Syntax { .. })));
}

fn instance_with(features: Vec<Vec<u8>>, schema: FeatureSchema) -> RmabInstance {
    let arms = features
        .into_iter()
        .map(|f| ArmModel::from_good_probs([[0.2, 0.5], [0.6, 0.9]], f))
        .collect::<Vec<_>>();
    RmabInstance::new(arms, 1, 3, 0.9, schema).unwrap()
}

#[test]
fn reward_tables() {
    let schema = FeatureSchema::synthetic(3, 5);
    let feats: Vec<Vec<u8>> = (0..10)
        .map(|i| onehot(15, &[i % 5, 5 + (i / 2) % 5, 10 + (i % 2) * 3]))
        .collect();
    let inst = instance_with(feats, schema);
    let t = RewardExpression::default_reward(15).to_reward_table(&inst).unwrap();
    assert!(t.values.iter().all(|r| *r == [0.0, 1.0]));

    // arm 8 has C in bucket 1 (index 10), arm 7 has C in bucket 4 (index 13)
    let e = RewardExpression::parse("state * agent_feats[10]", 15).unwrap();
    let t = e.to_reward_table(&inst).unwrap();
    assert_eq!(t.values[8], [0.0, 1.0]);
    assert_eq!(t.values[7], [0.0, 0.0]);

    // brute-force tabulation
    let e = RewardExpression::parse("state + 2*state*(agent_feats[0] or agent_feats[13]) - 0.5*agent_feats[6]", 15).unwrap();
    let t = e.to_reward_table(&inst).unwrap();
    for (i, arm) in inst.arms.iter().enumerate() {
        for s in 0..2u8 {
            assert_eq!(t.values[i][s as usize], e.evaluate(s, &arm.features));
        }
    }
}

#[test]
fn monotone_audit() {
    let schema = FeatureSchema::synthetic(1, 3);
    let inst = instance_with(vec![onehot(3, &[0]), onehot(3, &[2])], schema);
    let good = RewardExpression::parse("state + state*(2*agent_feats[0] + agent_feats[1])", 3).unwrap();
    assert!(good.is_monotone_on(&inst));
    assert!(good.check_monotone(&inst).is_ok());
    let bad = RewardExpression::parse("1 - state*agent_feats[2]", 3).unwrap();
    assert!(!bad.is_monotone_on(&inst));
    assert_eq!(bad.check_monotone(&inst).unwrap_err(), DslError::NonMonotone { arm: 1 });
}

#[test]
fn table_rejects_wider_expression() {
    let schema = FeatureSchema::synthetic(1, 3);
    let inst = instance_with(vec![onehot(3, &[0])], schema);
    let e = RewardExpression::parse("state * agent_feats[10]", 15).unwrap();
    assert!(matches!(e.to_reward_table(&inst), Err(DslError::IndexOutOfRange { index: 10, .. })));
}

// ---------------------------------------------------------------------------
// Independent reference: its own tree type, its own Python-semantics
// interpreter and its own source printer. Only the printed text reaches the
// crate's parser.

#[derive(Debug, Clone)]
enum Ref {
    Lit(f64),
    State,
    Feat(usize),
    Neg(Box<Ref>),
    Not(Box<Ref>),
    Add(Box<Ref>, Box<Ref>),
    Sub(Box<Ref>, Box<Ref>),
    Mul(Box<Ref>, Box<Ref>),
    And(Box<Ref>, Box<Ref>),
    Or(Box<Ref>, Box<Ref>),
}

fn truthy(x: f64) -> bool {
    x != 0.0
}

fn ref_eval(e: &Ref, s: f64, f: &[u8]) -> f64 {
    match e {
        Ref::Lit(v) => *v,
        Ref::State => s,
        Ref::Feat(i) => f[*i] as f64,
        Ref::Neg(a) => -ref_eval(a, s, f),
        Ref::Not(a) => (!truthy(ref_eval(a, s, f))) as u8 as f64,
        Ref::Add(a, b) => ref_eval(a, s, f) + ref_eval(b, s, f),
        Ref::Sub(a, b) => ref_eval(a, s, f) - ref_eval(b, s, f),
        Ref::Mul(a, b) => ref_eval(a, s, f) * ref_eval(b, s, f),
        Ref::And(a, b) => {
            let x = ref_eval(a, s, f);
            if truthy(x) {
                ref_eval(b, s, f)
            } else {
                x
            }
        }
        Ref::Or(a, b) => {
            let x = ref_eval(a, s, f);
            if truthy(x) {
                x
            } else {
                ref_eval(b, s, f)
            }
        }
    }
}

/// Python binding strength of the node's own operator.
fn ref_level(e: &Ref) -> u8 {
    match e {
        Ref::Or(..) => 1,
        Ref::And(..) => 2,
        Ref::Not(..) => 3,
        Ref::Add(..) | Ref::Sub(..) => 4,
        Ref::Mul(..) => 5,
        Ref::Neg(..) => 6,
        _ => 7,
    }
}

/// Prints with parentheses where Python requires them and, at random, where
/// it does not.
fn ref_print(e: &Ref, rng: &mut ChaCha8Rng) -> String {
    fn wrap(child: &Ref, need: u8, rng: &mut ChaCha8Rng) -> String {
        let text = ref_print(child, rng);
        if ref_level(child) < need || rng.random_bool(0.25) {
            format!("({text})")
        } else {
            text
        }
    }
    match e {
        Ref::Lit(v) => format!("{v}"),
        Ref::State => "state".into(),
        Ref::Feat(i) => format!("agent_feats[{i}]"),
        Ref::Neg(a) => format!("-{}", wrap(a, 6, rng)),
        Ref::Not(a) => format!("not {}", wrap(a, 3, rng)),
        Ref::Add(a, b) => format!("{} + {}", wrap(a, 4, rng), wrap(b, 5, rng)),
        Ref::Sub(a, b) => format!("{}-{}", wrap(a, 4, rng), wrap(b, 5, rng)),
        Ref::Mul(a, b) => format!("{}*{}", wrap(a, 5, rng), wrap(b, 6, rng)),
        Ref::And(a, b) => format!("{} and {}", wrap(a, 2, rng), wrap(b, 3, rng)),
        Ref::Or(a, b) => format!("{} or {}", wrap(a, 1, rng), wrap(b, 2, rng)),
    }
}

fn ref_random(rng: &mut ChaCha8Rng, depth: u32, n_feats: usize) -> Ref {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..3) {
            0 => Ref::Lit((rng.random_range(0..40) as f64) / 4.0),
            1 => Ref::State,
            _ => Ref::Feat(rng.random_range(0..n_feats)),
        };
    }
    let a = Box::new(ref_random(rng, depth - 1, n_feats));
    let op = rng.random_range(0..7);
    if op < 2 {
        return if op == 0 { Ref::Neg(a) } else { Ref::Not(a) };
    }
    let b = Box::new(ref_random(rng, depth - 1, n_feats));
    match op {
        2 => Ref::Add(a, b),
        3 => Ref::Sub(a, b),
        4 => Ref::Mul(a, b),
        5 => Ref::And(a, b),
        _ => Ref::Or(a, b),
    }
}

#[test]
fn agrees_with_reference_interpreter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 15;
    for _ in 0..1000 {
        let tree = ref_random(&mut rng, 5, n);
        let src = ref_print(&tree, &mut rng);
        let expr = RewardExpression::parse(&src, n).unwrap_or_else(|e| panic!("{src}: {e}"));
        let feats: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        for s in 0..2u8 {
            let want = ref_eval(&tree, s as f64, &feats);
            let got = expr.evaluate(s, &feats);
            assert!(want == got || (want.is_nan() && got.is_nan()), "{src}: {got} vs {want}");
        }
    }
}

fn arb_expr(n_feats: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|v| Expr::Num(v as f64 / 8.0)),
        Just(Expr::State),
        (0..n_feats).prop_map(Expr::Feat),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
            (
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::And), Just(BinOp::Or)],
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_parse_round_trip(ast in arb_expr(19)) {
        let rendered = ast.to_string();
        let parsed = RewardExpression::parse(&rendered, 19).unwrap();
        prop_assert_eq!(parsed.ast(), &ast);
        let again = RewardExpression::parse(&parsed.render(), 19).unwrap();
        prop_assert_eq!(again.ast(), parsed.ast());
    }
}

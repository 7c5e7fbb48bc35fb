//! Deterministic proposal backend.
//!
//! Proposals come from the family `b*state + state*(bonus)`, where the bonus
//! is a coefficient ladder over the lowest or highest buckets of each
//! prioritised category: `c*d*agent_feats[b_0] + c*(d-1)*agent_feats[b_1] + ...`.
//! Composite prompts combine the ladders as a sum, a product, or a single
//! ladder. All randomness comes from the caller's RNG.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Direction, GeneratorError, PreferencePrompt};
use crate::dsl::RewardExpression;
use crate::rmab::FeatureSchema;

/// Literal rendering with at most two decimals (`2.0` -> `2`).
fn lit(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    format!("{}", r + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Combine {
    Sum,
    Product,
    Single(usize),
}

struct Ladder {
    indices: Vec<usize>,
    scale: f64,
}

impl Ladder {
    fn new(schema: &FeatureSchema, category: &str, direction: Direction, depth: usize, scale: f64) -> Result<Self, GeneratorError> {
        let (pos, cat) = schema.category(category).map_err(|e| GeneratorError::InvalidPrompt(e.to_string()))?;
        let offset = schema.offset(pos);
        let b = cat.buckets.len();
        let depth = depth.clamp(1, b);
        let indices = (0..depth)
            .map(|k| if direction == Direction::High { offset + b - 1 - k } else { offset + k })
            .collect();
        Ok(Self { indices, scale })
    }

    fn terms(&self) -> Vec<String> {
        let d = self.indices.len();
        self.indices
            .iter()
            .enumerate()
            .map(|(k, i)| format!("{}*agent_feats[{i}]", lit((d - k) as f64 * self.scale)))
            .collect()
    }
}

fn render(base: f64, ladders: &[Ladder], combine: Combine) -> String {
    let base_term = match base {
        b if b == 0.0 => None,
        b if b == 1.0 => Some("state".to_string()),
        b => Some(format!("{}*state", lit(b))),
    };
    let bonus = match combine {
        _ if ladders.is_empty() => None,
        Combine::Sum => {
            let terms: Vec<String> = ladders.iter().flat_map(Ladder::terms).collect();
            Some(format!("state*({})", terms.join(" + ")))
        }
        Combine::Product => {
            let factors: Vec<String> = ladders.iter().map(|l| format!("({})", l.terms().join(" + "))).collect();
            Some(format!("state*{}", factors.join("*")))
        }
        Combine::Single(i) => Some(format!("state*({})", ladders[i].terms().join(" + "))),
    };
    match (base_term, bonus) {
        (Some(b), Some(x)) => format!("{b} + {x}"),
        (Some(b), None) => b,
        (None, Some(x)) => x,
        (None, None) => "state".into(),
    }
}

/// `state + state*(2*agent_feats[..] + 1*agent_feats[..] + ...)`: a depth-2
/// unit-scale ladder per prioritised category, summed.
pub fn canonical(prompt: &PreferencePrompt, schema: &FeatureSchema) -> Result<RewardExpression, GeneratorError> {
    let ladders = prompt
        .priorities()
        .into_iter()
        .map(|(c, d)| Ladder::new(schema, c, d, 2, 1.0))
        .collect::<Result<Vec<_>, _>>()?;
    let src = render(1.0, &ladders, Combine::Sum);
    Ok(RewardExpression::parse(&src, schema.len())?)
}

/// A fresh random member of the family.
pub fn variant(prompt: &PreferencePrompt, schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> Result<RewardExpression, GeneratorError> {
    let priorities = prompt.priorities();
    let mut ladders = Vec::with_capacity(priorities.len());
    for (c, d) in &priorities {
        let depth = rng.random_range(1..=3);
        let scale = (rng.random_range(0.5..3.0) * 100.0_f64).round() / 100.0;
        ladders.push(Ladder::new(schema, c, *d, depth, scale)?);
    }
    let combine = if ladders.len() < 2 {
        Combine::Sum
    } else {
        match rng.random_range(0..4) {
            0 | 1 => Combine::Sum,
            2 => Combine::Product,
            _ => Combine::Single(rng.random_range(0..ladders.len())),
        }
    };
    let base = [0.0, 0.5, 1.0, 1.0, 2.0][rng.random_range(0..5)];
    let src = render(base, &ladders, combine);
    Ok(RewardExpression::parse(&src, schema.len())?)
}

/// Multiplies every literal of `seed` by an independent factor in `[0.7, 1.3)`.
pub fn jitter(seed: &RewardExpression, rng: &mut ChaCha8Rng) -> Result<RewardExpression, GeneratorError> {
    let ast = seed.ast().map_literals(&mut |v| {
        let f: f64 = rng.random_range(0.7..1.3);
        (v * f * 100.0).round() / 100.0
    });
    Ok(RewardExpression::from_ast(ast, seed.n_features())?)
}

/// Template proposal. Without a seed, proposal 0 is the canonical ladder and
/// later proposals are random variants; with a seed, each proposal either
/// jitters the seed's coefficients or samples a fresh variant.
pub fn propose(
    prompt: &PreferencePrompt,
    schema: &FeatureSchema,
    seed: Option<&RewardExpression>,
    proposal_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RewardExpression, GeneratorError> {
    prompt.validate(schema)?;
    match seed {
        None if proposal_index == 0 => canonical(prompt, schema),
        None => variant(prompt, schema, rng),
        Some(s) if rng.random_bool(0.5) => jitter(s, rng),
        Some(_) => variant(prompt, schema, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::PreferenceClause;
    use rand::SeedableRng;

    fn schema() -> FeatureSchema {
        FeatureSchema::synthetic(3, 5)
    }

    #[test]
    fn canonical_low_a() {
        let p = PreferencePrompt::singular("A", Direction::Low);
        let e = propose(&p, &schema(), None, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(e.source(), "state + state*(2*agent_feats[0] + 1*agent_feats[1])");
    }

    #[test]
    fn canonical_composite_high() {
        let p = PreferencePrompt::new(vec![
            PreferenceClause::prioritize("B", Direction::High),
            PreferenceClause::prioritize("C", Direction::Low),
        ])
        .unwrap();
        let e = canonical(&p, &schema()).unwrap();
        assert_eq!(
            e.source(),
            "state + state*(2*agent_feats[9] + 1*agent_feats[8] + 2*agent_feats[10] + 1*agent_feats[11])"
        );
    }

    #[test]
    fn deterministic_in_rng() {
        let p = PreferencePrompt::singular("C", Direction::High);
        for i in 1..20 {
            let a = propose(&p, &schema(), None, i, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
            let b = propose(&p, &schema(), None, i, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn variants_are_monotone_and_targeted() {
        let p = PreferencePrompt::new(vec![
            PreferenceClause::prioritize("A", Direction::Low),
            PreferenceClause::prioritize("C", Direction::High),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut distinct = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let e = variant(&p, &schema(), &mut rng).unwrap();
            // every referenced bucket is one of the lowest three of A or highest three of C
            assert!(e.indices().iter().all(|i| [0, 1, 2, 14, 13, 12].contains(i)), "{}", e.source());
            let feats = [1u8, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1];
            assert!(e.evaluate(1, &feats) >= e.evaluate(0, &feats));
            assert_eq!(e.evaluate(0, &feats), 0.0);
            distinct.insert(e.source().to_string());
        }
        assert!(distinct.len() > 50);
    }

    #[test]
    fn seeded_proposals_stay_in_family() {
        let p = PreferencePrompt::singular("B", Direction::Low);
        let seed = canonical(&p, &schema()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..50 {
            let e = propose(&p, &schema(), Some(&seed), i, &mut rng).unwrap();
            assert!(e.indices().iter().all(|i| (5..8).contains(i)));
        }
    }

    #[test]
    fn literal_format() {
        assert_eq!(lit(2.0), "2");
        assert_eq!(lit(0.5), "0.5");
        assert_eq!(lit(1.234), "1.23");
        assert_eq!(lit(-0.0), "0");
    }

    #[test]
    fn utility_only_prompt() {
        let p = PreferencePrompt::new(vec![PreferenceClause::MaximizeUtility]).unwrap();
        assert_eq!(canonical(&p, &schema()).unwrap().source(), "state");
        let e = variant(&p, &schema(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(e.indices().is_empty());
    }
}

//! Rendering of generation, reflection and rating prompts from the template
//! files under `templates/`.

use super::{PreferenceClause, PreferencePrompt, ReflectStyle};
use crate::dsl::RewardExpression;
use crate::rmab::{FeatureSchema, UtilityFeatureDistribution};

pub const GENERATE: &str = include_str!("../../templates/generate.txt");
pub const SEED: &str = include_str!("../../templates/seed.txt");
pub const REFLECT: &str = include_str!("../../templates/reflect.txt");
pub const REFLECT_FUNCTION: &str = include_str!("../../templates/reflect_function.txt");
pub const REFLECT_PROMPT_ENGINEERING: &str = include_str!("../../templates/reflect_prompt_engineering.txt");
pub const REFLECT_NO_SHIFT: &str = include_str!("../../templates/reflect_no_shift.txt");
pub const REFLECT_MAX_UTILITY: &str = include_str!("../../templates/reflect_max_utility.txt");
pub const RATE: &str = include_str!("../../templates/rate.txt");

/// Phrase every reflection prompt asks the model to answer with.
pub const CHOICE_MARKER: &str = "The best reward function is at number:";
/// Phrase every rating prompt asks the model to answer with.
pub const RATING_MARKER: &str = "'rating: [RATING]'";

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Index table, one line per one-hot feature: ` 0. Feature A bucket 1 - Binary`.
pub fn feature_table(schema: &FeatureSchema) -> String {
    let mut out = String::new();
    let mut i = 0;
    for cat in &schema.categories {
        for label in &cat.buckets {
            out.push_str(&format!(" {i}. {label} - Binary\n"));
            i += 1;
        }
    }
    out
}

pub fn generation(prompt: &PreferencePrompt, schema: &FeatureSchema, seed: Option<&RewardExpression>) -> String {
    let goal = prompt.text();
    let n = schema.len().to_string();
    let first = schema.categories.first();
    let first_bucket = first.and_then(|c| c.buckets.first()).cloned().unwrap_or_default();
    let last_bucket = first.and_then(|c| c.buckets.last()).cloned().unwrap_or_default();
    let first_category = first.map(|c| c.name.clone()).unwrap_or_default();
    let all: Vec<&str> = schema.categories.iter().map(|c| c.name.as_str()).collect();
    let seed_block = seed.map(|s| fill(SEED, &[("seed", s.source())])).unwrap_or_default();
    fill(
        GENERATE,
        &[
            ("goal", &goal),
            ("n_features", &n),
            ("feature_table", &feature_table(schema)),
            ("first_bucket", &first_bucket),
            ("last_bucket", &last_bucket),
            ("first_category", &first_category),
            ("all_categories", &all.join(", ")),
            ("last_index", &schema.len().saturating_sub(1).to_string()),
            ("seed_block", &seed_block),
        ],
    )
}

pub fn reflection(
    prompt: &PreferencePrompt,
    candidates: &[(&str, &UtilityFeatureDistribution)],
    default: Option<&UtilityFeatureDistribution>,
    style: ReflectStyle,
) -> String {
    let goal = prompt.goal_text();
    let mut functions = String::new();
    for (i, (src, dist)) in candidates.iter().enumerate() {
        functions.push_str(&fill(
            REFLECT_FUNCTION,
            &[("number", &i.to_string()), ("source", src), ("distribution", &dist.describe())],
        ));
    }
    let mut extra = String::new();
    if style == ReflectStyle::PromptEngineering {
        extra.push_str(REFLECT_PROMPT_ENGINEERING.trim());
        extra.push(' ');
    }
    let shifted: Vec<&str> = prompt
        .clauses
        .iter()
        .filter_map(|c| match c {
            PreferenceClause::NoShift { category } => Some(category.as_str()),
            _ => None,
        })
        .collect();
    if !shifted.is_empty() {
        extra.push_str(fill(REFLECT_NO_SHIFT, &[("categories", &shifted.join(", "))]).trim());
        extra.push(' ');
    }
    if prompt.clauses.contains(&PreferenceClause::MaximizeUtility) {
        extra.push_str(REFLECT_MAX_UTILITY.trim());
        extra.push(' ');
    }
    let default_block = match default {
        Some(d) if !shifted.is_empty() => {
            format!("Additional Information - Rewards from Default reward function:\n{}", d.describe())
        }
        _ => String::new(),
    };
    fill(REFLECT, &[("goal", &goal), ("functions", &functions), ("default_block", &default_block), ("extra", &extra)])
}

pub fn rating(clause: &PreferenceClause, source: &str, distribution: &UtilityFeatureDistribution) -> String {
    fill(RATE, &[("clause", &clause.text()), ("source", source), ("distribution", &distribution.describe())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Direction;

    #[test]
    fn generation_prompt_substitutes_schema() {
        let schema = FeatureSchema::synthetic(3, 5);
        let p = PreferencePrompt::singular("A", Direction::Low);
        let text = generation(&p, &schema, None);
        assert!(text.contains("(length 15 array)"));
        assert!(text.contains(" 0. Feature A bucket 1 - Binary\n"));
        assert!(text.contains(" 14. Feature C bucket 5 - Binary\n"));
        assert!(text.contains("Goal:\nFocus on the agents with low value of feature A."));
        assert!(!text.contains('{'), "unfilled placeholder in {text}");
        let seed = RewardExpression::parse("state * agent_feats[3]", 15).unwrap();
        assert!(generation(&p, &schema, Some(&seed)).contains("$$$ state * agent_feats[3] $$$"));
    }

    #[test]
    fn reflection_prompt_lists_functions() {
        let schema = FeatureSchema::synthetic(2, 2);
        let d = UtilityFeatureDistribution::from_arm_utilities(&schema, &[&[1, 0, 0, 1]], &[2.0]);
        let p = PreferencePrompt::singular("A", Direction::High).with_no_shift(&schema);
        let text = reflection(&p, &[("state", &d), ("2*state", &d)], Some(&d), ReflectStyle::PromptEngineering);
        assert!(text.contains("Function Number 0:\nReward Function: state\n"));
        assert!(text.contains("Function Number 1:"));
        assert!(text.contains("Feature A bucket 1: 2.00\nFeature A bucket 2: 0.00"));
        assert!(text.contains("Additional Information"));
        assert!(text.contains("unintended shifts"));
        assert!(text.contains(CHOICE_MARKER));
        let plain = reflection(&PreferencePrompt::singular("A", Direction::High), &[("state", &d)], Some(&d), ReflectStyle::Standard);
        assert!(!plain.contains("Additional Information"));
    }

    #[test]
    fn rating_prompt_has_marker() {
        let schema = FeatureSchema::synthetic(1, 2);
        let d = UtilityFeatureDistribution::from_arm_utilities(&schema, &[&[1, 0]], &[1.0]);
        let text = rating(&PreferenceClause::prioritize("A", Direction::Low), "state", &d);
        assert!(text.contains(RATING_MARKER));
        assert!(text.contains("scale from 1 to 5"));
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::rmab::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Low,
    High,
}

impl Direction {
    pub fn is_high(self) -> bool {
        self == Direction::High
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Low => "low",
            Direction::High => "high",
        })
    }
}

/// One objective of a preference prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreferenceClause {
    Prioritize { category: String, direction: Direction },
    NoShift { category: String },
    MaximizeUtility,
}

impl PreferenceClause {
    pub fn prioritize(category: &str, direction: Direction) -> Self {
        PreferenceClause::Prioritize { category: category.to_string(), direction }
    }

    pub fn no_shift(category: &str) -> Self {
        PreferenceClause::NoShift { category: category.to_string() }
    }

    pub fn category(&self) -> Option<&str> {
        match self {
            PreferenceClause::Prioritize { category, .. } | PreferenceClause::NoShift { category } => Some(category),
            PreferenceClause::MaximizeUtility => None,
        }
    }

    /// Short stable label, e.g. `prioritize:A:low`.
    pub fn label(&self) -> String {
        match self {
            PreferenceClause::Prioritize { category, direction } => format!("prioritize:{category}:{direction}"),
            PreferenceClause::NoShift { category } => format!("no_shift:{category}"),
            PreferenceClause::MaximizeUtility => "maximize_utility".into(),
        }
    }

    /// Natural-language goal text for this clause.
    pub fn text(&self) -> String {
        match self {
            PreferenceClause::Prioritize { category, direction } => {
                format!("Focus on the agents with {direction} value of {}.", category_phrase(category))
            }
            PreferenceClause::NoShift { category } => format!(
                "Do not cause unintended shifts in the reward distribution over {}.",
                category_phrase(category)
            ),
            PreferenceClause::MaximizeUtility => "Maximize the total reward over all agents.".into(),
        }
    }
}

fn category_phrase(category: &str) -> String {
    if category.chars().count() == 1 {
        format!("feature {category}")
    } else {
        category.to_lowercase()
    }
}

/// A set of preference clauses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePrompt {
    pub clauses: Vec<PreferenceClause>,
}

impl PreferencePrompt {
    pub fn new(clauses: Vec<PreferenceClause>) -> Result<Self, GeneratorError> {
        if clauses.is_empty() {
            return Err(GeneratorError::InvalidPrompt("a prompt needs at least one clause".into()));
        }
        let utility = clauses.iter().filter(|c| **c == PreferenceClause::MaximizeUtility).count();
        if utility > 1 {
            return Err(GeneratorError::InvalidPrompt("at most one maximize-utility clause".into()));
        }
        Ok(Self { clauses })
    }

    pub fn singular(category: &str, direction: Direction) -> Self {
        Self { clauses: vec![PreferenceClause::prioritize(category, direction)] }
    }

    /// Checks that every referenced category exists.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), GeneratorError> {
        for cat in self.clauses.iter().filter_map(|c| c.category()) {
            if schema.position(cat).is_none() {
                return Err(GeneratorError::InvalidPrompt(format!("unknown category {cat:?}")));
            }
        }
        Ok(())
    }

    /// `(category, direction)` of every prioritisation clause, in order.
    pub fn priorities(&self) -> Vec<(&str, Direction)> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                PreferenceClause::Prioritize { category, direction } => Some((category.as_str(), *direction)),
                _ => None,
            })
            .collect()
    }

    /// Categories named by neither a prioritisation clause.
    pub fn unprompted_categories<'s>(&self, schema: &'s FeatureSchema) -> Vec<&'s str> {
        let prompted: Vec<&str> = self.priorities().into_iter().map(|(c, _)| c).collect();
        schema
            .categories
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| !prompted.contains(n))
            .collect()
    }

    /// Appends a no-shift clause for every category the prompt does not
    /// prioritise.
    pub fn with_no_shift(&self, schema: &FeatureSchema) -> Self {
        let mut clauses = self.clauses.clone();
        for cat in self.unprompted_categories(schema) {
            let clause = PreferenceClause::no_shift(cat);
            if !clauses.contains(&clause) {
                clauses.push(clause);
            }
        }
        Self { clauses }
    }

    pub fn with_max_utility(&self) -> Self {
        let mut clauses = self.clauses.clone();
        if !clauses.contains(&PreferenceClause::MaximizeUtility) {
            clauses.push(PreferenceClause::MaximizeUtility);
        }
        Self { clauses }
    }

    /// Main goal sentence (prioritisation clauses only).
    pub fn goal_text(&self) -> String {
        let parts: Vec<String> = self
            .priorities()
            .iter()
            .map(|(c, d)| format!("{d} value of {}", category_phrase(c)))
            .collect();
        if parts.is_empty() {
            return self.clauses.iter().map(|c| c.text()).collect::<Vec<_>>().join(" ");
        }
        format!("Focus on the agents with {}.", parts.join(" and also with "))
    }

    /// Full rendered text: the goal followed by any extra objectives.
    pub fn text(&self) -> String {
        let mut out = self.goal_text();
        let has_priorities = !self.priorities().is_empty();
        for c in &self.clauses {
            if has_priorities && !matches!(c, PreferenceClause::Prioritize { .. }) {
                out.push(' ');
                out.push_str(&c.text());
            }
        }
        out
    }

    /// Stable identifier, e.g. `A:low+C:high`.
    pub fn id(&self) -> String {
        self.clauses
            .iter()
            .map(|c| match c {
                PreferenceClause::Prioritize { category, direction } => format!("{category}:{direction}"),
                PreferenceClause::NoShift { category } => format!("noshift:{category}"),
                PreferenceClause::MaximizeUtility => "maxutil".into(),
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for PreferencePrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Parses the identifier form, e.g. `A:low+C:high+noshift:B+maxutil`.
impl std::str::FromStr for PreferencePrompt {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |part: &str| GeneratorError::InvalidPrompt(format!("cannot read clause {part:?}"));
        let clauses = s
            .split('+')
            .map(str::trim)
            .map(|part| match part.split_once(':') {
                _ if part.eq_ignore_ascii_case("maxutil") => Ok(PreferenceClause::MaximizeUtility),
                Some(("noshift", cat)) if !cat.is_empty() => Ok(PreferenceClause::no_shift(cat)),
                Some((cat, "low")) if !cat.is_empty() => Ok(PreferenceClause::prioritize(cat, Direction::Low)),
                Some((cat, "high")) if !cat.is_empty() => Ok(PreferenceClause::prioritize(cat, Direction::High)),
                _ => Err(bad(part)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(clauses)
    }
}

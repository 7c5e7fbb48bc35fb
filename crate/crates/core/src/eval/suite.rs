use serde::{Deserialize, Serialize};

use crate::generator::{Direction, PreferenceClause, PreferencePrompt};
use crate::rmab::FeatureSchema;

const DIRECTIONS: [Direction; 2] = [Direction::Low, Direction::High];

/// Both directions of every category, category-major.
pub fn singular_prompts(schema: &FeatureSchema) -> Vec<PreferencePrompt> {
    schema
        .categories
        .iter()
        .flat_map(|c| DIRECTIONS.iter().map(move |d| PreferencePrompt::singular(&c.name, *d)))
        .collect()
}

/// Every unordered category pair with every direction pair.
pub fn composite_prompts(schema: &FeatureSchema) -> Vec<PreferencePrompt> {
    let names: Vec<&str> = schema.categories.iter().map(|c| c.name.as_str()).collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            for da in DIRECTIONS {
                for db in DIRECTIONS {
                    out.push(PreferencePrompt {
                        clauses: vec![PreferenceClause::prioritize(a, da), PreferenceClause::prioritize(b, db)],
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSuite {
    pub singular: Vec<PreferencePrompt>,
    pub composite: Vec<PreferencePrompt>,
}

pub fn prompt_suite(schema: &FeatureSchema) -> PromptSuite {
    PromptSuite { singular: singular_prompts(schema), composite: composite_prompts(schema) }
}

/// One (dataset, instance, prompt) cell of the run matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: usize,
    pub instance: usize,
    pub prompt: usize,
}

/// Cells in dataset, instance, prompt order.
pub fn plan_cells(datasets: &[usize], n_instances: usize, n_prompts: usize) -> Vec<Cell> {
    let mut out = Vec::with_capacity(datasets.len() * n_instances * n_prompts);
    for &dataset in datasets {
        for instance in 0..n_instances {
            for prompt in 0..n_prompts {
                out.push(Cell { dataset, instance, prompt });
            }
        }
    }
    out
}

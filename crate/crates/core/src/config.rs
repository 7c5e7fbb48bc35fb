//! JSON run configuration with `dataset`, `generator`, `adjudicator` and
//! `eval` sections. Every field has a desk-scale default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudicator::{AdjudicatorError, WelfareFunction};
use crate::datagen::{DatasetConfig, Profile, DATASET_SIGMA, DATASET_WEIGHTS};
use crate::eval::{composite_prompts, prompt_suite, singular_prompts, LlmSource, MatrixConfig, Method};
use crate::generator::{GeneratorConfig, PreferencePrompt};
use crate::rmab::{FeatureSchema, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Adjudicator(#[from] AdjudicatorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub n_arms: usize,
    pub budget: usize,
    pub horizon: usize,
    pub discount: f64,
    pub buckets_per_feature: usize,
    pub n_instances: usize,
    /// Which of the three synthetic datasets to use.
    pub datasets: Vec<usize>,
    pub shared_delta: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_arms: 100,
            budget: 10,
            horizon: 12,
            discount: 0.9,
            buckets_per_feature: 5,
            n_instances: 5,
            datasets: vec![1, 2, 3],
            shared_delta: true,
        }
    }
}

impl DatasetSection {
    pub fn full_scale() -> Self {
        Self { n_arms: 2100, budget: 210, ..Self::default() }
    }

    /// Shape shared by the datasets; weights and seed are filled per dataset.
    pub fn shape(&self) -> DatasetConfig {
        DatasetConfig {
            n_arms: self.n_arms,
            weights: DATASET_WEIGHTS[0],
            sigma: DATASET_SIGMA,
            buckets_per_feature: self.buckets_per_feature,
            budget: self.budget,
            horizon: self.horizon,
            discount: self.discount,
            master_seed: 0,
            n_instances: self.n_instances,
            shared_delta: self.shared_delta,
            profile: Profile::Synthetic,
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        self.shape().schema()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjudicatorSection {
    /// `utilitarian`, `nash`, `egalitarian` or `p=<value>`.
    pub welfare: String,
    pub solver: SolverConfig,
    pub scoring_seeds: usize,
}

impl Default for AdjudicatorSection {
    fn default() -> Self {
        Self { welfare: "utilitarian".into(), solver: SolverConfig::default(), scoring_seeds: 10 }
    }
}

impl AdjudicatorSection {
    pub fn welfare(&self) -> Result<WelfareFunction, ConfigError> {
        Ok(WelfareFunction::from_name(&self.welfare)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSet {
    Singular,
    Composite,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub methods: Vec<Method>,
    pub eval_seeds: usize,
    pub ks: Vec<usize>,
    pub prompts: PromptSet,
    pub llm: LlmSource,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { methods: Method::all(), eval_seeds: 10, ks: vec![1, 2, 3], prompts: PromptSet::Composite, llm: LlmSource::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub generator: GeneratorConfig,
    pub adjudicator: AdjudicatorSection,
    pub eval: EvalSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn prompts(&self) -> Vec<PreferencePrompt> {
        let schema = self.dataset.schema();
        match self.eval.prompts {
            PromptSet::Singular => singular_prompts(&schema),
            PromptSet::Composite => composite_prompts(&schema),
            PromptSet::All => {
                let s = prompt_suite(&schema);
                s.singular.into_iter().chain(s.composite).collect()
            }
        }
    }

    pub fn matrix_config(&self, offline: bool) -> MatrixConfig {
        MatrixConfig {
            methods: self.eval.methods.clone(),
            generator: self.generator.clone(),
            solver: self.adjudicator.solver,
            scoring_seeds: self.adjudicator.scoring_seeds,
            eval_seeds: self.eval.eval_seeds,
            ks: self.eval.ks.clone(),
            llm: self.eval.llm.clone(),
            seed: self.seed,
            offline,
        }
    }
}

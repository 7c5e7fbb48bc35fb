//! End-to-end evaluation: prompt suites, per-choice metrics, the method run
//! matrix and its aggregate report.

mod matrix;
mod method;
mod metrics;
mod report;
mod suite;

pub use matrix::{run_matrix, write_outputs, LlmSource, MatrixConfig, MatrixOutput, ScatterPoint};
pub use method::{Extension, Method, Preset};
pub use metrics::{evaluate_choice, score_distribution, ChoiceMetrics, EvaluationRecord, Evaluator, KScores};
pub use report::{parse_records, records_to_jsonl, KSummary, MethodSummary, Report, Stat};
pub use suite::{composite_prompts, plan_cells, Cell, prompt_suite, singular_prompts, PromptSuite};

use thiserror::Error;

use crate::adjudicator::AdjudicatorError;
use crate::datagen::DataGenError;
use crate::dsl::DslError;
use crate::generator::GeneratorError;
use crate::rmab::RmabError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("degenerate group: default-policy utility of {0} is zero")]
    DegenerateGroup(String),

    #[error("k must be 1, 2 or 3, got {0}")]
    InvalidK(usize),

    #[error("invalid evaluation config: {0}")]
    Config(String),

    #[error("missing transcripts: {0}")]
    MissingTranscripts(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("record format: {0}")]
    Format(String),

    #[error(transparent)]
    Generator(#[from] GeneratorError),

    #[error(transparent)]
    Adjudicator(#[from] AdjudicatorError),

    #[error(transparent)]
    Rmab(#[from] RmabError),

    #[error(transparent)]
    Dsl(#[from] DslError),

    #[error(transparent)]
    DataGen(#[from] DataGenError),
}

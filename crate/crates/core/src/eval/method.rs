use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::adjudicator::WelfareFunction;

/// Welfare presets used by the SCLM methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Util,
    Nash,
    Egal,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Util, Preset::Nash, Preset::Egal];

    pub fn welfare(self) -> WelfareFunction {
        match self {
            Preset::Util => WelfareFunction::utilitarian(),
            Preset::Nash => WelfareFunction::nash(),
            Preset::Egal => WelfareFunction::egalitarian(),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Preset::Util => "util",
            Preset::Nash => "nash",
            Preset::Egal => "egal",
        }
    }
}

/// Prompt transformation of the extended-prompt baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Extension {
    /// No-shift clauses for every unprompted category.
    Fair,
    /// A maximize-utility clause.
    Util,
}

impl Extension {
    fn tag(self) -> &'static str {
        match self {
            Extension::Fair => "Fair",
            Extension::Util => "Util",
        }
    }
}

/// A selection method of the run matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    SclmSim(Preset),
    SclmLlm(Preset),
    Dlm,
    DlmPromptEngg,
    LlmZeroshot,
    SclmFull,
    DlmExtended(Extension),
    SclmExtended(Extension),
}

impl Method {
    /// Every method, in report order.
    pub fn all() -> Vec<Method> {
        let mut out: Vec<Method> = Preset::ALL.iter().map(|p| Method::SclmSim(*p)).collect();
        out.extend(Preset::ALL.iter().map(|p| Method::SclmLlm(*p)));
        out.extend([Method::Dlm, Method::DlmPromptEngg, Method::LlmZeroshot, Method::SclmFull]);
        for e in [Extension::Fair, Extension::Util] {
            out.push(Method::DlmExtended(e));
            out.push(Method::SclmExtended(e));
        }
        out
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::SclmSim(p) => write!(f, "SCLM-SIM-{}", p.tag()),
            Method::SclmLlm(p) => write!(f, "SCLM-LLM-{}", p.tag()),
            Method::Dlm => f.write_str("DLM"),
            Method::DlmPromptEngg => f.write_str("DLM-PromptEngg"),
            Method::LlmZeroshot => f.write_str("LLM-Zeroshot"),
            Method::SclmFull => f.write_str("SCLM-Full"),
            Method::DlmExtended(e) => write!(f, "DLM-ExtendedPrompt-{}", e.tag()),
            Method::SclmExtended(e) => write!(f, "SCLM-ExtendedPrompt-{}", e.tag()),
        }
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::all()
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownMethod(s.to_string()))
    }
}

impl TryFrom<String> for Method {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

//! Single-line reward expressions over `state` and `agent_feats[i]`.
//!
//! The grammar is the arithmetic/boolean subset of Python that generated
//! reward functions use: numeric literals, `+ - *`, unary `-`, `and`, `or`,
//! `not` and parentheses. `and`/`or` return one of their operands exactly as
//! Python does, so `agent_feats[0] or 3*agent_feats[1]` is `3` when only the
//! second feature is set.

mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::rmab::{RewardTable, RmabError, RmabInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },

    #[error("feature index {index} out of range for {n_features} features")]
    IndexOutOfRange { index: usize, n_features: usize },

    #[error("disallowed {what} at {pos}")]
    Disallowed { pos: usize, what: String },

    #[error("reward r(1) < r(0) for arm {arm}; strict mode rejects non-monotone rewards")]
    NonMonotone { arm: usize },

    #[error(transparent)]
    Rmab(#[from] RmabError),
}

impl DslError {
    pub(crate) fn syntax(pos: usize, message: impl Into<String>) -> Self {
        DslError::Syntax { pos, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul => 5,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 6;
const PREC_ATOM: u8 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    State,
    Feat(usize),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::State | Expr::Feat(_) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Not(_) => PREC_NOT,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }

    pub fn eval(&self, state: u8, feats: &[u8]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::State => f64::from(state),
            Expr::Feat(i) => f64::from(feats[*i]),
            Expr::Neg(e) => -e.eval(state, feats),
            Expr::Not(e) => {
                if e.eval(state, feats) == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Bin(op, l, r) => {
                let lv = l.eval(state, feats);
                match op {
                    BinOp::Add => lv + r.eval(state, feats),
                    BinOp::Sub => lv - r.eval(state, feats),
                    BinOp::Mul => lv * r.eval(state, feats),
                    BinOp::And => {
                        if lv != 0.0 {
                            r.eval(state, feats)
                        } else {
                            lv
                        }
                    }
                    BinOp::Or => {
                        if lv != 0.0 {
                            lv
                        } else {
                            r.eval(state, feats)
                        }
                    }
                }
            }
        }
    }

    fn collect_indices(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Feat(i) => {
                out.insert(*i);
            }
            Expr::Neg(e) | Expr::Not(e) => e.collect_indices(out),
            Expr::Bin(_, l, r) => {
                l.collect_indices(out);
                r.collect_indices(out);
            }
            Expr::Num(_) | Expr::State => {}
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    /// Applies `g` to every numeric literal.
    pub fn map_literals(&self, g: &mut impl FnMut(f64) -> f64) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(g(*v)),
            Expr::State => Expr::State,
            Expr::Feat(i) => Expr::Feat(*i),
            Expr::Neg(e) => Expr::Neg(Box::new(e.map_literals(g))),
            Expr::Not(e) => Expr::Not(Box::new(e.map_literals(g))),
            Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(l.map_literals(g)), Box::new(r.map_literals(g))),
        }
    }
}

/// Minimal-parenthesis rendering; parsing the output yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::State => f.write_str("state"),
            Expr::Feat(i) => write!(f, "agent_feats[{i}]"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_child(f, PREC_NEG)
            }
            Expr::Not(e) => {
                f.write_str("not ")?;
                e.write_child(f, PREC_NOT)
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                l.write_child(f, p)?;
                write!(f, " {} ", op.symbol())?;
                r.write_child(f, p + 1)
            }
        }
    }
}

/// A parsed reward expression together with its original source text.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardExpression {
    source: String,
    ast: Expr,
    n_features: usize,
}

impl RewardExpression {
    /// Parses `source` and checks every `agent_feats[i]` against `n_features`.
    pub fn parse(source: &str, n_features: usize) -> Result<Self, DslError> {
        let ast = parser::parse_expr(source, n_features)?;
        Ok(Self { source: source.trim().to_string(), ast, n_features })
    }

    pub fn from_ast(ast: Expr, n_features: usize) -> Result<Self, DslError> {
        let source = ast.to_string();
        Self::parse(&source, n_features)
    }

    /// `R*(s) = s`.
    pub fn default_reward(n_features: usize) -> Self {
        Self { source: "state".into(), ast: Expr::State, n_features }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn render(&self) -> String {
        self.ast.to_string()
    }

    pub fn indices(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.ast.collect_indices(&mut out);
        out
    }

    /// Evaluates the expression. `feats` must cover every referenced index.
    pub fn evaluate(&self, state: u8, feats: &[u8]) -> f64 {
        self.ast.eval(state, feats)
    }

    /// `r_i(s)` for every arm of `instance`.
    pub fn to_reward_table(&self, instance: &RmabInstance) -> Result<RewardTable, DslError> {
        let width = instance.schema.len();
        if let Some(&max) = self.indices().iter().next_back() {
            if max >= width {
                return Err(DslError::IndexOutOfRange { index: max, n_features: width });
            }
        }
        let values = instance
            .arms
            .iter()
            .map(|arm| [self.evaluate(0, &arm.features), self.evaluate(1, &arm.features)])
            .collect();
        Ok(RewardTable::new(values)?)
    }

    /// True when `r(1) >= r(0)` for every arm.
    pub fn is_monotone_on(&self, instance: &RmabInstance) -> bool {
        instance
            .arms
            .iter()
            .all(|arm| self.evaluate(1, &arm.features) >= self.evaluate(0, &arm.features))
    }

    /// Strict-mode check: the first arm violating `r(1) >= r(0)`, as an error.
    pub fn check_monotone(&self, instance: &RmabInstance) -> Result<(), DslError> {
        match instance
            .arms
            .iter()
            .position(|arm| self.evaluate(1, &arm.features) < self.evaluate(0, &arm.features))
        {
            Some(arm) => Err(DslError::NonMonotone { arm }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for RewardExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests;

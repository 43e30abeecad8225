//! A small total expression language for utility functions over histories.
//!
//! Every expression evaluates to a value in `[0, 1]`. The concrete syntax is
//! s-expressions:
//!
//! ```text
//! (add (alive 0 1) (const 0.25))
//! (discount 0.9 (fraclive {0 1 2} t))
//! (match {0:1 2:0} 3)
//! ```
//!
//! `t` is the step variable bound by `timemean` and `discount`; it may only
//! appear inside one of them.

mod enumerate;
mod eval;
mod parse;
mod prior;
pub mod random;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structures::{Space, Structure};

pub use enumerate::{
    enumerate_hypotheses, EnumerateError, HypothesisWorld, Operator, OperatorWhitelist, DEFAULT_MAX_HYPOTHESES,
};
pub(crate) use eval::eval_checked;
pub use eval::{check, eval, EvalError};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use prior::{make_prior, Hypothesis, HypothesisSet, PriorError, PriorMode};

/// A finite value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit(f64);

impl Unit {
    pub const ZERO: Unit = Unit(0.0);
    pub const ONE: Unit = Unit(1.0);

    pub fn new(value: f64) -> Option<Self> {
        // `+ 0.0` folds -0.0 into 0.0.
        (0.0..=1.0).contains(&value).then_some(Unit(value + 0.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// True for values strictly inside `(0, 1)`, as discount factors require.
    pub fn is_interior(self) -> bool {
        self.0 > 0.0 && self.0 < 1.0
    }
}

impl Eq for Unit {}

impl Ord for Unit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Unit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for Unit {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // f64's Display is the shortest string that parses back exactly.
        write!(f, "{}", self.0)
    }
}

impl Serialize for Unit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Unit::new(v).ok_or_else(|| serde::de::Error::custom(format!("{v} is outside [0, 1]")))
    }
}

/// A time reference: an absolute step, or the step variable of the
/// enclosing `timemean`/`discount`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeRef {
    At(usize),
    Step,
}

impl fmt::Display for TimeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeRef::At(t) => write!(f, "{t}"),
            TimeRef::Step => f.write_str("t"),
        }
    }
}

/// Utility expression AST.
///
/// Variant order is the operator order of the grammar; the derived `Ord`
/// (operator first, then operands) is the tie-break of canonical
/// hypothesis enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UtilityExpr {
    Const(Unit),
    /// 1 if the cell is in state 1 at time `t`.
    Alive {
        cell: usize,
        t: TimeRef,
    },
    /// Fraction of the space's cells in state 1 at time `t`.
    FracLive {
        space: Space,
        t: TimeRef,
    },
    /// 1 if the world restricted to the structure's space equals it at `t`.
    Match {
        structure: Structure,
        t: TimeRef,
    },
    /// Mean of the body over `t = 0..=T`.
    TimeMean(Box<UtilityExpr>),
    /// Geometric average of the body over `t = 0..=T` with weights `gamma^t`.
    Discount {
        gamma: Unit,
        body: Box<UtilityExpr>,
    },
    Add(Box<UtilityExpr>, Box<UtilityExpr>),
    Sub(Box<UtilityExpr>, Box<UtilityExpr>),
    Mul(Box<UtilityExpr>, Box<UtilityExpr>),
    Min(Box<UtilityExpr>, Box<UtilityExpr>),
    Max(Box<UtilityExpr>, Box<UtilityExpr>),
    Clamp(Box<UtilityExpr>),
}

impl UtilityExpr {
    pub fn constant(value: f64) -> Option<Self> {
        Unit::new(value).map(UtilityExpr::Const)
    }

    pub fn alive(cell: usize, t: usize) -> Self {
        UtilityExpr::Alive {
            cell,
            t: TimeRef::At(t),
        }
    }

    /// Node count. Scalar attributes (cells, times, constants, gamma) live
    /// inside their node and add nothing.
    pub fn description_length(&self) -> usize {
        use UtilityExpr::*;
        match self {
            Const(_) | Alive { .. } | FracLive { .. } | Match { .. } => 1,
            TimeMean(body) | Discount { body, .. } | Clamp(body) => 1 + body.description_length(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Min(a, b) | Max(a, b) => {
                1 + a.description_length() + b.description_length()
            }
        }
    }

    /// True when the expression ignores the history entirely.
    pub fn is_constant(&self) -> bool {
        matches!(self, UtilityExpr::Const(_))
    }

    pub fn operator(&self) -> Operator {
        use UtilityExpr::*;
        match self {
            Const(_) => Operator::Const,
            Alive { .. } => Operator::Alive,
            FracLive { .. } => Operator::FracLive,
            Match { .. } => Operator::Match,
            TimeMean(_) => Operator::TimeMean,
            Discount { .. } => Operator::Discount,
            Add(..) => Operator::Add,
            Sub(..) => Operator::Sub,
            Mul(..) => Operator::Mul,
            Min(..) => Operator::Min,
            Max(..) => Operator::Max,
            Clamp(_) => Operator::Clamp,
        }
    }
}

impl fmt::Display for UtilityExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use UtilityExpr::*;
        let op = self.operator().name();
        match self {
            Const(v) => write!(f, "({op} {v})"),
            Alive { cell, t } => write!(f, "({op} {cell} {t})"),
            FracLive { space, t } => write!(f, "({op} {space} {t})"),
            Match { structure, t } => {
                write!(f, "({op} {{")?;
                for (k, (cell, value)) in structure.pairs().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{cell}:{value}")?;
                }
                write!(f, "}} {t})")
            }
            TimeMean(body) | Clamp(body) => write!(f, "({op} {body})"),
            Discount { gamma, body } => write!(f, "({op} {gamma} {body})"),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Min(a, b) | Max(a, b) => write!(f, "({op} {a} {b})"),
        }
    }
}

impl Serialize for UtilityExpr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Canonical text of an expression.
pub fn print(expr: &UtilityExpr) -> String {
    expr.to_string()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
}

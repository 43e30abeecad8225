use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::UtilityExpr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("hypothesis list is empty")]
    Empty,
    #[error("hypothesis `{0}` appears more than once")]
    Duplicate(String),
    #[error("prior weight {weight} for hypothesis {index} is not positive and finite")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("{weights} weights given for {hypotheses} hypotheses")]
    WeightCount { weights: usize, hypotheses: usize },
}

/// How prior mass is spread over a hypothesis list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "weights", rename_all = "kebab-case")]
pub enum PriorMode {
    /// Mass proportional to `2^-description_length`.
    Mdl,
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub expr: UtilityExpr,
    pub prior: f64,
}

/// A finite, normalized, mutually exclusive set of utility hypotheses in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HypothesisSet {
    hypotheses: Vec<Hypothesis>,
}

impl HypothesisSet {
    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter()
    }

    pub fn priors(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.prior).collect()
    }

    pub fn exprs(&self) -> impl Iterator<Item = &UtilityExpr> {
        self.hypotheses.iter().map(|h| &h.expr)
    }
}

/// Normalizes a prior over `exprs`.
pub fn make_prior(exprs: Vec<UtilityExpr>, mode: &PriorMode) -> Result<HypothesisSet, PriorError> {
    if exprs.is_empty() {
        return Err(PriorError::Empty);
    }
    let mut seen = HashSet::with_capacity(exprs.len());
    for e in &exprs {
        if !seen.insert(e) {
            return Err(PriorError::Duplicate(e.to_string()));
        }
    }

    let weights: Vec<f64> = match mode {
        PriorMode::Uniform => vec![1.0; exprs.len()],
        PriorMode::Mdl => {
            // Shift by the shortest length so long lists cannot underflow to zero.
            let lengths: Vec<usize> = exprs.iter().map(UtilityExpr::description_length).collect();
            let shortest = *lengths.iter().min().expect("non-empty");
            lengths.iter().map(|&len| (-((len - shortest) as f64)).exp2()).collect()
        }
        PriorMode::Explicit(weights) => {
            if weights.len() != exprs.len() {
                return Err(PriorError::WeightCount {
                    weights: weights.len(),
                    hypotheses: exprs.len(),
                });
            }
            if let Some((index, &weight)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
                return Err(PriorError::NonPositiveWeight { index, weight });
            }
            weights.clone()
        }
    };

    let total: f64 = weights.iter().sum();
    let hypotheses = exprs
        .into_iter()
        .zip(weights)
        .map(|(expr, w)| Hypothesis { expr, prior: w / total })
        .collect();
    Ok(HypothesisSet { hypotheses })
}

//! Inverse preference inference for a single structure event.
//!
//! A hypothetical chooser who maximizes `u` picks a structure on a space at
//! step `i`. Each candidate is scored by splicing it into the world at `i`,
//! re-evolving the rest of the history and evaluating `u` on the hybrid.
//! Choice probabilities are Boltzmann-rational in those scores, and Bayes'
//! rule turns them into a posterior over the hypothesis set.

use serde::Serialize;
use thiserror::Error;

use crate::cellsys::{History, WorldState};
use crate::numeric::neumaier_sum;
use crate::structures::{enumerate_structures, restrict, splice, EnumerationLimits, Space, Structure, StructureError};
use crate::udsl::{self, EvalError, HypothesisSet, UtilityExpr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("event time {time} is beyond the horizon {horizon}")]
    TimeBeyondHorizon { time: usize, horizon: usize },
    #[error("rationality coefficient must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("{likelihoods} likelihoods supplied for {hypotheses} hypotheses")]
    LikelihoodCount { likelihoods: usize, hypotheses: usize },
    #[error("evidence for {event} is {evidence}; every hypothesis assigns it zero likelihood")]
    DegenerateEvidence { event: String, evidence: f64 },
}

/// `str@i`: a structure observed at step `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StructureEvent {
    pub structure: Structure,
    pub time: usize,
}

impl StructureEvent {
    pub fn new(structure: Structure, time: usize) -> Self {
        StructureEvent { structure, time }
    }

    /// The structure a history actually holds on `space` at step `time`.
    pub fn observed(history: &History, space: &Space, time: usize) -> Result<Self, InferenceError> {
        let state = history.state(time).ok_or(InferenceError::TimeBeyondHorizon {
            time,
            horizon: history.horizon(),
        })?;
        Ok(StructureEvent {
            structure: restrict(state, space)?,
            time,
        })
    }

    pub fn space(&self) -> &Space {
        self.structure.space()
    }
}

impl std::fmt::Display for StructureEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}@{}", self.structure.space(), self.structure, self.time)
    }
}

/// Boltzmann-rational chooser with inverse temperature `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodModel {
    beta: f64,
}

impl LikelihoodModel {
    pub fn new(beta: f64) -> Result<Self, InferenceError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(InferenceError::InvalidBeta(beta));
        }
        Ok(LikelihoodModel { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Softmax of `beta * values`, shifted by the maximum before exponentiating.
pub fn boltzmann(values: &[f64], beta: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| (beta * (v - max)).exp()).collect();
    let z = neumaier_sum(weights.iter().copied());
    weights.into_iter().map(|w| w / z).collect()
}

fn check_time(baseline: &History, time: usize) -> Result<(), InferenceError> {
    if time > baseline.horizon() {
        return Err(InferenceError::TimeBeyondHorizon {
            time,
            horizon: baseline.horizon(),
        });
    }
    Ok(())
}

/// Baseline prefix up to `time - 1`, the spliced state at `time`, and the
/// rule's evolution after it.
pub fn hybrid_history(baseline: &History, time: usize, candidate: &Structure) -> Result<History, InferenceError> {
    check_time(baseline, time)?;
    let system = baseline.system();
    candidate.check(system.cell_count(), system.state_count())?;
    let mut states: Vec<WorldState> = baseline.states()[..time].to_vec();
    states.push(splice(&baseline.states()[time], candidate)?);
    for n in time + 1..=baseline.horizon() {
        let next = system.step_unchecked(&states[n - 1]);
        states.push(next);
    }
    Ok(History::from_states(system.clone(), states))
}

/// What a chooser maximizing `u` attains by picking `candidate` at `time`.
pub fn counterfactual_value(
    baseline: &History,
    time: usize,
    candidate: &Structure,
    u: &UtilityExpr,
) -> Result<f64, InferenceError> {
    let hybrid = hybrid_history(baseline, time, candidate)?;
    Ok(udsl::eval(u, &hybrid)?)
}

/// The hybrid histories for every candidate structure on one space and step,
/// in canonical structure order. Shared across hypotheses, since the
/// re-evolution does not depend on `u`.
#[derive(Debug, Clone)]
pub struct Counterfactuals {
    space: Space,
    time: usize,
    state_count: usize,
    hybrids: Vec<History>,
}

impl Counterfactuals {
    pub fn build(
        baseline: &History,
        space: &Space,
        time: usize,
        limits: &EnumerationLimits,
    ) -> Result<Self, InferenceError> {
        check_time(baseline, time)?;
        let system = baseline.system();
        space.check(system.cell_count())?;
        let hybrids = enumerate_structures(space, system.state_count(), limits)?
            .map(|candidate| hybrid_history(baseline, time, &candidate))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Counterfactuals {
            space: space.clone(),
            time,
            state_count: system.state_count(),
            hybrids,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn len(&self) -> usize {
        self.hybrids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hybrids.is_empty()
    }

    pub fn hybrids(&self) -> &[History] {
        &self.hybrids
    }

    /// `V(str')` for every candidate, in canonical order.
    pub fn values(&self, u: &UtilityExpr) -> Result<Vec<f64>, InferenceError> {
        if let Some(h) = self.hybrids.first() {
            let sys = h.system();
            udsl::check(u, sys.cell_count(), sys.state_count(), h.horizon())?;
        }
        Ok(self
            .hybrids
            .iter()
            .map(|h| udsl::eval_checked(u, h.states(), None))
            .collect())
    }

    /// `P(str' | u)` for every candidate.
    pub fn likelihood(
        &self,
        u: &UtilityExpr,
        model: &LikelihoodModel,
    ) -> Result<StructureDistribution, InferenceError> {
        let values = self.values(u)?;
        Ok(StructureDistribution {
            space: self.space.clone(),
            state_count: self.state_count,
            probabilities: boltzmann(&values, model.beta),
            values,
        })
    }
}

/// A choice distribution over every structure on a space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureDistribution {
    space: Space,
    #[serde(skip)]
    state_count: usize,
    values: Vec<f64>,
    probabilities: Vec<f64>,
}

impl StructureDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Counterfactual values the probabilities were derived from.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probability_of(&self, structure: &Structure) -> Option<f64> {
        if structure.space() != &self.space {
            return None;
        }
        let rank = structure.rank(self.state_count) as usize;
        self.probabilities.get(rank).copied()
    }
}

/// `P(str' | u)` over all structures on `space` at `time`.
pub fn likelihood(
    baseline: &History,
    space: &Space,
    time: usize,
    u: &UtilityExpr,
    model: &LikelihoodModel,
    limits: &EnumerationLimits,
) -> Result<StructureDistribution, InferenceError> {
    Counterfactuals::build(baseline, space, time, limits)?.likelihood(u, model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorRow {
    pub hypothesis: UtilityExpr,
    pub prior: f64,
    pub likelihood: f64,
    pub posterior: f64,
}

/// Bayes' rule over a hypothesis set for one event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorTable {
    pub event: StructureEvent,
    pub evidence: f64,
    pub rows: Vec<PosteriorRow>,
}

impl PosteriorTable {
    pub fn posteriors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.posterior).collect()
    }
}

/// `q_u = L_u p_u / sum_v L_v p_v`, with `likelihoods` in hypothesis order.
pub fn posterior(
    event: &StructureEvent,
    hypotheses: &HypothesisSet,
    likelihoods: &[f64],
) -> Result<PosteriorTable, InferenceError> {
    if likelihoods.len() != hypotheses.len() {
        return Err(InferenceError::LikelihoodCount {
            likelihoods: likelihoods.len(),
            hypotheses: hypotheses.len(),
        });
    }
    let joint: Vec<f64> = hypotheses.iter().zip(likelihoods).map(|(h, &l)| l * h.prior).collect();
    let evidence = neumaier_sum(joint.iter().copied());
    if !(evidence > 0.0 && evidence.is_finite()) {
        return Err(InferenceError::DegenerateEvidence {
            event: event.to_string(),
            evidence,
        });
    }
    let rows = hypotheses
        .iter()
        .zip(likelihoods)
        .zip(joint)
        .map(|((h, &likelihood), j)| PosteriorRow {
            hypothesis: h.expr.clone(),
            prior: h.prior,
            likelihood,
            posterior: j / evidence,
        })
        .collect();
    Ok(PosteriorTable {
        event: event.clone(),
        evidence,
        rows,
    })
}

/// Posterior for `event` using counterfactuals already built on its space and step.
pub fn posterior_from_counterfactuals(
    event: &StructureEvent,
    counterfactuals: &Counterfactuals,
    hypotheses: &HypothesisSet,
    model: &LikelihoodModel,
) -> Result<PosteriorTable, InferenceError> {
    let likelihoods = hypotheses
        .exprs()
        .map(|u| {
            let dist = counterfactuals.likelihood(u, model)?;
            Ok(dist
                .probability_of(&event.structure)
                .expect("event lies on the counterfactual space"))
        })
        .collect::<Result<Vec<f64>, InferenceError>>()?;
    posterior(event, hypotheses, &likelihoods)
}

/// Full pipeline for one event against a baseline history.
pub fn infer(
    baseline: &History,
    event: &StructureEvent,
    hypotheses: &HypothesisSet,
    model: &LikelihoodModel,
    limits: &EnumerationLimits,
) -> Result<PosteriorTable, InferenceError> {
    let system = baseline.system();
    event.structure.check(system.cell_count(), system.state_count())?;
    let cf = Counterfactuals::build(baseline, event.space(), event.time, limits)?;
    posterior_from_counterfactuals(event, &cf, hypotheses, model)
}

/// `U_{str@i} = sum_u q_u u(h)`.
pub fn expected_utility(table: &PosteriorTable, actual: &History) -> Result<f64, InferenceError> {
    let terms = table
        .rows
        .iter()
        .map(|r| Ok(r.posterior * udsl::eval(&r.hypothesis, actual)?))
        .collect::<Result<Vec<f64>, InferenceError>>()?;
    Ok(terms.into_iter().sum())
}

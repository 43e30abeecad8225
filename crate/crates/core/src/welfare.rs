//! Global all-time expected welfare of a history, and the term-by-term
//! comparison of two histories.
//!
//! The sum runs over every step `i = 0..=T`, every space in the family, and
//! every hypothesis `u`, adding `u(h) * P(u | (h(i)|Spc)@i)`. Summation order
//! is fixed: step ascending, then spaces in family order, then hypotheses in
//! declaration order. Parallel evaluation is allowed, but reduction always
//! happens in that order.

use serde::Serialize;
use thiserror::Error;

use crate::cellsys::History;
use crate::inference::{
    posterior_from_counterfactuals, Counterfactuals, InferenceError, LikelihoodModel, StructureEvent,
};
use crate::structures::{enumerate_spaces, EnumerationLimits, Space, SpaceFamily, Structure, StructureError};
use crate::udsl::{self, EvalError, HypothesisSet};

pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Human-readable statement of the fixed summation order, echoed in reports.
pub const CANONICAL_ORDER: &str =
    "time step ascending; then spaces by size, then lexicographic cell indices; then hypotheses in declaration order";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WelfareError {
    #[error("history horizon {history} differs from policy horizon {policy}")]
    HorizonMismatch { history: usize, policy: usize },
    #[error("histories were generated by different systems")]
    SystemMismatch,
    #[error("tie tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("hypothesis `{hypothesis}` does not fit the world: {source}")]
    Hypothesis { hypothesis: String, source: EvalError },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("at step {time}, space {space}: {source}")]
    Event {
        time: usize,
        space: String,
        source: InferenceError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// The declared truncation that makes the welfare sum finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationPolicy {
    pub horizon: usize,
    pub space_family: SpaceFamily,
    pub hypotheses: HypothesisSet,
    pub model: LikelihoodModel,
    pub tie_tolerance: f64,
    pub limits: EnumerationLimits,
}

impl TruncationPolicy {
    pub fn new(horizon: usize, space_family: SpaceFamily, hypotheses: HypothesisSet, model: LikelihoodModel) -> Self {
        TruncationPolicy {
            horizon,
            space_family,
            hypotheses,
            model,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
            limits: EnumerationLimits::default(),
        }
    }

    pub fn with_tie_tolerance(mut self, eps: f64) -> Result<Self, WelfareError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(WelfareError::InvalidTolerance(eps));
        }
        self.tie_tolerance = eps;
        Ok(self)
    }

    pub fn with_limits(mut self, limits: EnumerationLimits) -> Self {
        self.limits = limits;
        self
    }
}

/// Execution knobs that never change the numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WelfareOptions {
    /// Worker threads for the (step, space) fan-out; 1 runs inline.
    pub threads: usize,
    /// Length of the top-contributor list in reports.
    pub top: usize,
}

impl Default for WelfareOptions {
    fn default() -> Self {
        WelfareOptions { threads: 1, top: 10 }
    }
}

/// Per-hypothesis terms `q_u * u(h)` for one event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTerms {
    pub time: usize,
    pub space: Space,
    pub structure: Structure,
    pub terms: Vec<f64>,
}

impl EventTerms {
    /// `U_{str@i}`, summed in hypothesis order.
    pub fn subtotal(&self) -> f64 {
        self.terms.iter().sum()
    }
}

/// Every event's terms, in canonical order.
pub fn event_terms(
    history: &History,
    policy: &TruncationPolicy,
    options: &WelfareOptions,
) -> Result<Vec<EventTerms>, WelfareError> {
    if history.horizon() != policy.horizon {
        return Err(WelfareError::HorizonMismatch {
            history: history.horizon(),
            policy: policy.horizon,
        });
    }
    let system = history.system();
    for u in policy.hypotheses.exprs() {
        udsl::check(u, system.cell_count(), system.state_count(), history.horizon()).map_err(|source| {
            WelfareError::Hypothesis {
                hypothesis: u.to_string(),
                source,
            }
        })?;
    }
    let utilities: Vec<f64> = policy
        .hypotheses
        .exprs()
        .map(|u| udsl::eval(u, history).expect("checked above"))
        .collect();
    let spaces = enumerate_spaces(system, &policy.space_family, &policy.limits)?;
    let pairs: Vec<(usize, &Space)> = (0..=policy.horizon)
        .flat_map(|i| spaces.iter().map(move |s| (i, s)))
        .collect();

    let one = |&(time, space): &(usize, &Space)| -> Result<EventTerms, WelfareError> {
        let wrap = |source: InferenceError| WelfareError::Event {
            time,
            space: space.to_string(),
            source,
        };
        let event = StructureEvent::observed(history, space, time).map_err(wrap)?;
        let cf = Counterfactuals::build(history, space, time, &policy.limits).map_err(wrap)?;
        let table = posterior_from_counterfactuals(&event, &cf, &policy.hypotheses, &policy.model).map_err(wrap)?;
        let terms = table
            .rows
            .iter()
            .zip(&utilities)
            .map(|(row, &u)| row.posterior * u)
            .collect();
        Ok(EventTerms {
            time,
            space: space.clone(),
            structure: event.structure,
            terms,
        })
    };

    if options.threads <= 1 {
        pairs.iter().map(one).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| WelfareError::Pool(e.to_string()))?;
        // `collect` on an indexed parallel iterator preserves order.
        pool.install(|| pairs.par_iter().map(one).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSubtotal {
    pub time: usize,
    pub space: Space,
    pub structure: Structure,
    pub subtotal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceSubtotal {
    pub space: Space,
    pub subtotal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    pub time: usize,
    pub space: Space,
    pub structure: Structure,
    pub hypothesis: String,
    pub weighted_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub total: f64,
    pub per_step: Vec<f64>,
    pub per_space: Vec<SpaceSubtotal>,
    pub events: Vec<EventSubtotal>,
    pub top_contributors: Vec<Contribution>,
    pub policy: TruncationPolicy,
}

pub fn global_welfare(history: &History, policy: &TruncationPolicy) -> Result<WelfareReport, WelfareError> {
    global_welfare_with(history, policy, &WelfareOptions::default())
}

pub fn global_welfare_with(
    history: &History,
    policy: &TruncationPolicy,
    options: &WelfareOptions,
) -> Result<WelfareReport, WelfareError> {
    let events = event_terms(history, policy, options)?;

    let mut per_step = vec![0.0; policy.horizon + 1];
    let mut per_space: Vec<SpaceSubtotal> = Vec::new();
    let mut subtotals = Vec::with_capacity(events.len());
    for e in &events {
        let sub = e.subtotal();
        per_step[e.time] += sub;
        match per_space.iter_mut().find(|s| s.space == e.space) {
            Some(s) => s.subtotal += sub,
            None => per_space.push(SpaceSubtotal {
                space: e.space.clone(),
                subtotal: sub,
            }),
        }
        subtotals.push(EventSubtotal {
            time: e.time,
            space: e.space.clone(),
            structure: e.structure.clone(),
            subtotal: sub,
        });
    }
    let total = per_step.iter().sum();

    let exprs: Vec<_> = policy.hypotheses.exprs().collect();
    let mut flat: Vec<(&EventTerms, usize, f64)> = events
        .iter()
        .flat_map(|e| e.terms.iter().enumerate().map(move |(k, &w)| (e, k, w)))
        .collect();
    // Stable sort keeps canonical order among equal weights.
    flat.sort_by(|a, b| b.2.total_cmp(&a.2));
    let top_contributors = flat
        .into_iter()
        .take(options.top)
        .map(|(e, k, w)| Contribution {
            time: e.time,
            space: e.space.clone(),
            structure: e.structure.clone(),
            hypothesis: exprs[k].to_string(),
            weighted_utility: w,
        })
        .collect();

    Ok(WelfareReport {
        total,
        per_step,
        per_space,
        events: subtotals,
        top_contributors,
        policy: policy.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Better,
    Worse,
    Tie,
}

impl Verdict {
    pub fn from_difference(d: f64, eps: f64) -> Self {
        if d > eps {
            Verdict::Better
        } else if d < -eps {
            Verdict::Worse
        } else {
            Verdict::Tie
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Verdict::Better => Verdict::Worse,
            Verdict::Worse => Verdict::Better,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub difference: f64,
    pub verdict: Verdict,
    pub tie_tolerance: f64,
    /// Running difference after each time step.
    pub partial_sums: Vec<f64>,
}

/// Compares `h` against `other` by accumulating the aligned difference series
/// `q_u(h) u(h) - q_u(h') u(h')` in canonical order.
pub fn compare_histories(
    h: &History,
    other: &History,
    policy: &TruncationPolicy,
    options: &WelfareOptions,
) -> Result<ComparisonVerdict, WelfareError> {
    if h.system() != other.system() {
        return Err(WelfareError::SystemMismatch);
    }
    if h.horizon() != other.horizon() {
        return Err(WelfareError::HorizonMismatch {
            history: other.horizon(),
            policy: h.horizon(),
        });
    }
    let a = event_terms(h, policy, options)?;
    let b = event_terms(other, policy, options)?;

    let mut difference = 0.0;
    let mut partial_sums = vec![0.0; policy.horizon + 1];
    for (ea, eb) in a.iter().zip(&b) {
        debug_assert_eq!((ea.time, &ea.space), (eb.time, &eb.space));
        for (x, y) in ea.terms.iter().zip(&eb.terms) {
            difference += x - y;
        }
        partial_sums[ea.time] = difference;
    }
    Ok(ComparisonVerdict {
        difference,
        verdict: Verdict::from_difference(difference, policy.tie_tolerance),
        tie_tolerance: policy.tie_tolerance,
        partial_sums,
    })
}

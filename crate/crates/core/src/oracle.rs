//! Brute-force reference for posteriors and welfare.
//!
//! Deliberately naive and kept apart from `inference` and `welfare`: its own
//! candidate counter, its own hybrid construction, no max-shifted softmax and
//! no compensated sums. Only domain types and the world/DSL semantics are
//! shared.

use thiserror::Error;

use crate::cellsys::{CellularSystem, History, WorldState};
use crate::inference::{PosteriorRow, PosteriorTable, StructureEvent};
use crate::structures::{enumerate_spaces, Space, Structure, StructureError};
use crate::udsl::{self, EvalError, HypothesisSet};
use crate::welfare::TruncationPolicy;

pub const MAX_CANDIDATES: usize = 256;
pub const MAX_HYPOTHESES: usize = 64;
pub const MAX_HORIZON: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle caps exceeded: {0}")]
    Cap(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("zero evidence")]
    ZeroEvidence,
}

fn caps(system: &CellularSystem, horizon: usize, space: &Space, hypotheses: usize) -> Result<usize, OracleError> {
    if horizon > MAX_HORIZON {
        return Err(OracleError::Cap(format!("horizon {horizon} > {MAX_HORIZON}")));
    }
    if hypotheses > MAX_HYPOTHESES {
        return Err(OracleError::Cap(format!("{hypotheses} hypotheses > {MAX_HYPOTHESES}")));
    }
    let mut count: usize = 1;
    for _ in space.cells() {
        count *= system.state_count();
        if count > MAX_CANDIDATES {
            return Err(OracleError::Cap(format!("more than {MAX_CANDIDATES} candidates")));
        }
    }
    Ok(count)
}

/// Fails with [`OracleError::Cap`] if any event of `policy` over `history`
/// is too large for the oracle.
pub fn check_caps(history: &History, policy: &TruncationPolicy) -> Result<(), OracleError> {
    for space in enumerate_spaces(history.system(), &policy.space_family, &policy.limits)? {
        caps(history.system(), history.horizon(), &space, policy.hypotheses.len())?;
    }
    Ok(())
}

/// Naive Bayes posterior for the structure `baseline` holds on `space` at `time`.
pub fn oracle_posterior(
    baseline: &History,
    space: &Space,
    time: usize,
    hypotheses: &HypothesisSet,
    beta: f64,
) -> Result<PosteriorTable, OracleError> {
    let system = baseline.system();
    let horizon = baseline.horizon();
    let count = caps(system, horizon, space, hypotheses.len())?;
    space.check(system.cell_count())?;
    if time > horizon {
        return Err(OracleError::Cap(format!("time {time} > horizon {horizon}")));
    }
    let base = system.state_count();
    let cells = space.cells();
    let now = &baseline.states()[time];

    let mut observed_code = 0;
    for &c in cells {
        observed_code = observed_code * base + now.values()[c] as usize;
    }

    // Candidate worlds: code digits are written most significant first.
    let mut worlds: Vec<History> = Vec::with_capacity(count);
    for code in 0..count {
        let mut digits = vec![0u8; cells.len()];
        let mut rest = code;
        for k in (0..cells.len()).rev() {
            digits[k] = (rest % base) as u8;
            rest /= base;
        }
        let mut spliced = now.values().to_vec();
        for (k, &c) in cells.iter().enumerate() {
            spliced[c] = digits[k];
        }
        let mut states: Vec<WorldState> = Vec::new();
        for t in 0..time {
            states.push(baseline.states()[t].clone());
        }
        states.push(WorldState::new(spliced));
        while states.len() <= horizon {
            let next = system.step(states.last().unwrap()).expect("valid state");
            states.push(next);
        }
        worlds.push(History::from_states(system.clone(), states));
    }

    let mut likelihoods = Vec::new();
    for hyp in hypotheses.iter() {
        let mut values = Vec::new();
        for w in &worlds {
            values.push(udsl::eval(&hyp.expr, w)?);
        }
        // P(obs) = exp(b V_obs) / sum_k exp(b V_k) = 1 / sum_k exp(b (V_k - V_obs))
        let mut denom = 0.0;
        for v in &values {
            denom += (beta * (v - values[observed_code])).exp();
        }
        likelihoods.push(1.0 / denom);
    }

    let mut evidence = 0.0;
    for (hyp, l) in hypotheses.iter().zip(&likelihoods) {
        evidence += l * hyp.prior;
    }
    if evidence <= 0.0 {
        return Err(OracleError::ZeroEvidence);
    }
    let mut rows = Vec::new();
    for (hyp, &l) in hypotheses.iter().zip(&likelihoods) {
        rows.push(PosteriorRow {
            hypothesis: hyp.expr.clone(),
            prior: hyp.prior,
            likelihood: l,
            posterior: l * hyp.prior / evidence,
        });
    }
    let observed = Structure::new(space.clone(), cells.iter().map(|&c| now.values()[c]).collect())?;
    Ok(PosteriorTable {
        event: StructureEvent::new(observed, time),
        evidence,
        rows,
    })
}

/// Naive triple loop over steps, spaces and hypotheses.
pub fn oracle_welfare(history: &History, policy: &TruncationPolicy) -> Result<f64, OracleError> {
    let spaces = enumerate_spaces(history.system(), &policy.space_family, &policy.limits)?;
    let mut total = 0.0;
    for time in 0..=history.horizon() {
        for space in &spaces {
            let table = oracle_posterior(history, space, time, &policy.hypotheses, policy.model.beta())?;
            for row in &table.rows {
                total += udsl::eval(&row.hypothesis, history)? * row.posterior;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::LikelihoodModel;
    use crate::structures::SpaceFamily;
    use crate::udsl::{make_prior, parse, PriorMode};
    use std::collections::BTreeMap;

    fn identity_history(v: &str, horizon: usize) -> History {
        let table: BTreeMap<Vec<u8>, u8> = [(vec![0], 0), (vec![1], 1)].into_iter().collect();
        let sys = CellularSystem::table(1, 2, vec![vec![0]], table).unwrap();
        sys.history(WorldState::parse(v).unwrap(), horizon).unwrap()
    }

    fn set(texts: &[&str]) -> HypothesisSet {
        make_prior(texts.iter().map(|t| parse(t).unwrap()).collect(), &PriorMode::Uniform).unwrap()
    }

    #[test]
    fn two_hypothesis_case() {
        let h = identity_history("1", 1);
        let t = oracle_posterior(&h, &Space::single(0), 0, &set(&["(const 0.5)", "(alive 0 1)"]), 1.0).unwrap();
        assert!((t.rows[0].posterior - 0.4061545150486906).abs() < 1e-14);
        assert!((t.rows[1].posterior - 0.5938454849513094).abs() < 1e-14);
    }

    #[test]
    fn beta_zero_and_single() {
        let h = identity_history("1", 2);
        let hs = make_prior(
            vec![parse("(alive 0 2)").unwrap(), parse("(const 0.1)").unwrap()],
            &PriorMode::Explicit(vec![3.0, 1.0]),
        )
        .unwrap();
        let t = oracle_posterior(&h, &Space::single(0), 1, &hs, 0.0).unwrap();
        assert_eq!(t.posteriors(), hs.priors());
        let t = oracle_posterior(&h, &Space::single(0), 1, &set(&["(alive 0 2)"]), 3.0).unwrap();
        assert_eq!(t.rows[0].posterior, 1.0);
    }

    #[test]
    fn welfare_values() {
        let h = identity_history("1", 1);
        let family = SpaceFamily::AllUpToSize { k: 1 };
        let p = TruncationPolicy::new(
            1,
            family.clone(),
            set(&["(const 0.5)", "(alive 0 1)"]),
            LikelihoodModel::new(1.0).unwrap(),
        );
        assert!((oracle_welfare(&h, &p).unwrap() - 1.5938454849513094).abs() < 1e-14);
        let c = TruncationPolicy::new(1, family, set(&["(const 0.7)"]), LikelihoodModel::new(1.0).unwrap());
        let w = oracle_welfare(&h, &c).unwrap();
        assert!((w - 2.0 * 0.7).abs() < 1e-15);
        assert_eq!(w - oracle_welfare(&h, &c).unwrap(), 0.0);
    }

    #[test]
    fn caps_enforced() {
        let sys = CellularSystem::elementary(30, 9, crate::cellsys::Boundary::Toroidal).unwrap();
        let h = sys.history(WorldState::zeros(9), 1).unwrap();
        let big = Space::new((0..9).collect()).unwrap();
        assert!(matches!(
            oracle_posterior(&h, &big, 0, &set(&["(const 0)"]), 1.0),
            Err(OracleError::Cap(_))
        ));
        let long = sys.history(WorldState::zeros(9), 9).unwrap();
        assert!(matches!(
            oracle_posterior(&long, &Space::single(0), 0, &set(&["(const 0)"]), 1.0),
            Err(OracleError::Cap(_))
        ));
    }
}

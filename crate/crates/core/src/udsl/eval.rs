use thiserror::Error;

use super::{TimeRef, UtilityExpr};
use crate::cellsys::{CellState, History, WorldState};
use crate::structures::Space;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cell {cell} is outside a world of {cell_count} cells")]
    CellOutOfRange { cell: usize, cell_count: usize },
    #[error("time {t} is beyond the horizon {horizon}")]
    TimeBeyondHorizon { t: usize, horizon: usize },
    #[error("state {state} is outside the alphabet of size {state_count}")]
    StateOutOfRange { state: CellState, state_count: usize },
    #[error("step variable used outside timemean/discount")]
    UnboundStep,
    #[error("discount factor {0} is not strictly inside (0, 1)")]
    InvalidGamma(f64),
}

struct Shape {
    cells: usize,
    states: usize,
    horizon: usize,
}

/// Checks every reference in `expr` against a world and horizon without
/// evaluating anything.
pub fn check(expr: &UtilityExpr, cell_count: usize, state_count: usize, horizon: usize) -> Result<(), EvalError> {
    let shape = Shape {
        cells: cell_count,
        states: state_count,
        horizon,
    };
    check_in(expr, &shape, false)
}

fn check_cell(cell: usize, shape: &Shape) -> Result<(), EvalError> {
    if cell >= shape.cells {
        return Err(EvalError::CellOutOfRange {
            cell,
            cell_count: shape.cells,
        });
    }
    Ok(())
}

fn check_time(t: TimeRef, shape: &Shape, bound: bool) -> Result<(), EvalError> {
    match t {
        TimeRef::Step if !bound => Err(EvalError::UnboundStep),
        TimeRef::At(t) if t > shape.horizon => Err(EvalError::TimeBeyondHorizon {
            t,
            horizon: shape.horizon,
        }),
        _ => Ok(()),
    }
}

fn check_space(space: &Space, shape: &Shape) -> Result<(), EvalError> {
    space.cells().iter().try_for_each(|&c| check_cell(c, shape))
}

fn check_in(expr: &UtilityExpr, shape: &Shape, bound: bool) -> Result<(), EvalError> {
    use UtilityExpr::*;
    match expr {
        Const(_) => Ok(()),
        Alive { cell, t } => {
            check_cell(*cell, shape)?;
            check_time(*t, shape, bound)
        }
        FracLive { space, t } => {
            check_space(space, shape)?;
            check_time(*t, shape, bound)
        }
        Match { structure, t } => {
            check_space(structure.space(), shape)?;
            if let Some(&state) = structure.values().iter().find(|&&v| v as usize >= shape.states) {
                return Err(EvalError::StateOutOfRange {
                    state,
                    state_count: shape.states,
                });
            }
            check_time(*t, shape, bound)
        }
        TimeMean(body) | Clamp(body) => check_in(body, shape, bound || matches!(expr, TimeMean(_))),
        Discount { gamma, body } => {
            if !gamma.is_interior() {
                return Err(EvalError::InvalidGamma(gamma.get()));
            }
            check_in(body, shape, true)
        }
        Add(a, b) | Sub(a, b) | Mul(a, b) | Min(a, b) | Max(a, b) => {
            check_in(a, shape, bound)?;
            check_in(b, shape, bound)
        }
    }
}

/// `u(h)`. Always in `[0, 1]`.
pub fn eval(expr: &UtilityExpr, history: &History) -> Result<f64, EvalError> {
    let system = history.system();
    check(expr, system.cell_count(), system.state_count(), history.horizon())?;
    Ok(eval_checked(expr, history.states(), None))
}

pub(crate) fn eval_checked(expr: &UtilityExpr, states: &[WorldState], step: Option<usize>) -> f64 {
    use UtilityExpr::*;
    let at = |t: &TimeRef| -> &WorldState {
        match t {
            TimeRef::At(t) => &states[*t],
            TimeRef::Step => &states[step.expect("checked binding")],
        }
    };
    match expr {
        Const(v) => v.get(),
        Alive { cell, t } => indicator(at(t).values()[*cell] == 1),
        FracLive { space, t } => {
            let s = at(t).values();
            let live = space.cells().iter().filter(|&&c| s[c] == 1).count();
            live as f64 / space.len() as f64
        }
        Match { structure, t } => {
            let s = at(t).values();
            indicator(structure.pairs().all(|(c, v)| s[c] == v))
        }
        TimeMean(body) => {
            let sum: f64 = (0..states.len()).map(|t| eval_checked(body, states, Some(t))).sum();
            unit(sum / states.len() as f64)
        }
        Discount { gamma, body } => {
            let mut weight = 1.0;
            let mut num = 0.0;
            let mut den = 0.0;
            for t in 0..states.len() {
                num += weight * eval_checked(body, states, Some(t));
                den += weight;
                weight *= gamma.get();
            }
            unit(num / den)
        }
        Add(a, b) => unit(eval_checked(a, states, step) + eval_checked(b, states, step)),
        Sub(a, b) => unit(eval_checked(a, states, step) - eval_checked(b, states, step)),
        Mul(a, b) => eval_checked(a, states, step) * eval_checked(b, states, step),
        Min(a, b) => eval_checked(a, states, step).min(eval_checked(b, states, step)),
        Max(a, b) => eval_checked(a, states, step).max(eval_checked(b, states, step)),
        Clamp(a) => unit(eval_checked(a, states, step)),
    }
}

fn indicator(on: bool) -> f64 {
    if on {
        1.0
    } else {
        0.0
    }
}

fn unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

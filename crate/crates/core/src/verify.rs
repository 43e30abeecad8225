//! Randomized comparison of the main inference/welfare path against the
//! brute-force oracle.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::cellsys::{Boundary, CellularSystem, History, WorldState};
use crate::inference::{infer, LikelihoodModel, StructureEvent};
use crate::oracle::{oracle_posterior, oracle_welfare};
use crate::structures::{enumerate_spaces, Space, SpaceFamily};
use crate::udsl::{make_prior, random::random_expr, HypothesisSet, HypothesisWorld, PriorMode, UtilityExpr};
use crate::welfare::{global_welfare, TruncationPolicy};

pub const POSTERIOR_TOLERANCE: f64 = 1e-10;
pub const WELFARE_TOLERANCE: f64 = 1e-9;

/// Size bounds for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceBounds {
    pub max_cells: usize,
    pub max_horizon: usize,
    pub max_hypotheses: usize,
    pub max_depth: usize,
}

impl Default for InstanceBounds {
    fn default() -> Self {
        InstanceBounds {
            max_cells: 3,
            max_horizon: 3,
            max_hypotheses: 8,
            max_depth: 3,
        }
    }
}

/// A history together with the truncation to evaluate it under.
#[derive(Debug, Clone)]
pub struct Instance {
    pub history: History,
    pub policy: TruncationPolicy,
}

pub const BETA_GRID: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

fn random_system<R: Rng + ?Sized>(rng: &mut R, max_cells: usize) -> CellularSystem {
    let cells = rng.random_range(1..=max_cells);
    if rng.random_bool(0.5) {
        let boundary = if rng.random_bool(0.5) {
            Boundary::Toroidal
        } else {
            Boundary::FixedZero
        };
        return CellularSystem::elementary(rng.random_range(0..=255), cells, boundary).expect("valid rule");
    }
    let neighborhoods: Vec<Vec<usize>> = (0..cells)
        .map(|_| {
            let size = rng.random_range(1..=cells);
            (0..size).map(|_| rng.random_range(0..cells)).collect()
        })
        .collect();
    let mut table = BTreeMap::new();
    for arity in 1..=cells {
        for code in 0..(1usize << arity) {
            let key = (0..arity).rev().map(|b| ((code >> b) & 1) as u8).collect();
            table.insert(key, rng.random_range(0..2));
        }
    }
    CellularSystem::table(cells, 2, neighborhoods, table).expect("total table")
}

fn random_hypotheses<R: Rng + ?Sized>(rng: &mut R, world: HypothesisWorld, bounds: &InstanceBounds) -> HypothesisSet {
    let n = rng.random_range(1..=bounds.max_hypotheses);
    let mut exprs: Vec<UtilityExpr> = Vec::with_capacity(n);
    while exprs.len() < n {
        let depth = rng.random_range(0..=bounds.max_depth);
        let e = random_expr(rng, world, depth);
        if !exprs.contains(&e) {
            exprs.push(e);
        }
    }
    let mode = match rng.random_range(0..3) {
        0 => PriorMode::Mdl,
        1 => PriorMode::Uniform,
        _ => PriorMode::Explicit((0..n).map(|_| rng.random_range(0.05..3.0)).collect()),
    };
    make_prior(exprs, &mode).expect("distinct, positive")
}

fn random_family<R: Rng + ?Sized>(rng: &mut R, cells: usize) -> SpaceFamily {
    let k = rng.random_range(1..=cells.min(3));
    match rng.random_range(0..3) {
        0 => SpaceFamily::AllUpToSize { k },
        1 => SpaceFamily::ConnectedWindows { k },
        _ => {
            let spaces = (0..rng.random_range(1..=3))
                .map(|_| {
                    let picked: Vec<usize> = (0..cells).filter(|_| rng.random_bool(0.5)).collect();
                    Space::new(picked).unwrap_or_else(|_| Space::single(rng.random_range(0..cells)))
                })
                .collect();
            SpaceFamily::ExplicitList { spaces }
        }
    }
}

/// A random binary-alphabet instance within `bounds`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, bounds: &InstanceBounds) -> Instance {
    let system = random_system(rng, bounds.max_cells);
    let horizon = rng.random_range(0..=bounds.max_horizon);
    let initial = WorldState::new((0..system.cell_count()).map(|_| rng.random_range(0..2)).collect());
    let history = system.history(initial, horizon).expect("valid state");
    let world = HypothesisWorld {
        cell_count: system.cell_count(),
        state_count: system.state_count(),
        horizon,
    };
    let hypotheses = random_hypotheses(rng, world, bounds);
    let beta = if rng.random_bool(0.6) {
        BETA_GRID[rng.random_range(0..BETA_GRID.len())]
    } else {
        rng.random_range(0.0..6.0)
    };
    let family = random_family(rng, system.cell_count());
    let policy = TruncationPolicy::new(horizon, family, hypotheses, LikelihoodModel::new(beta).expect("finite"));
    Instance { history, policy }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub cases: usize,
    pub events_checked: usize,
    pub posterior_rows_checked: usize,
    pub max_posterior_diff: f64,
    pub max_welfare_diff: f64,
    pub posterior_tolerance: f64,
    pub welfare_tolerance: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl Default for VerifyReport {
    fn default() -> Self {
        VerifyReport {
            cases: 0,
            events_checked: 0,
            posterior_rows_checked: 0,
            max_posterior_diff: 0.0,
            max_welfare_diff: 0.0,
            posterior_tolerance: POSTERIOR_TOLERANCE,
            welfare_tolerance: WELFARE_TOLERANCE,
            failures: Vec::new(),
            passed: true,
        }
    }
}

impl VerifyReport {
    fn fail(&mut self, label: &str, msg: String) {
        self.passed = false;
        self.failures.push(format!("{label}: {msg}"));
    }

    /// Checks one instance, folding its worst deviations into the report.
    pub fn check(&mut self, label: &str, instance: &Instance) {
        self.cases += 1;
        let Instance { history, policy } = instance;
        let spaces = match enumerate_spaces(history.system(), &policy.space_family, &policy.limits) {
            Ok(s) => s,
            Err(e) => return self.fail(label, format!("space family: {e}")),
        };
        for time in 0..=history.horizon() {
            for space in &spaces {
                let main = StructureEvent::observed(history, space, time)
                    .and_then(|ev| infer(history, &ev, &policy.hypotheses, &policy.model, &policy.limits));
                let reference = oracle_posterior(history, space, time, &policy.hypotheses, policy.model.beta());
                let (main, reference) = match (main, reference) {
                    (Ok(m), Ok(r)) => (m, r),
                    (m, r) => {
                        return self.fail(
                            label,
                            format!("step {time} space {space}: main {:?} oracle {:?}", m.err(), r.err()),
                        )
                    }
                };
                self.events_checked += 1;
                for (a, b) in main.rows.iter().zip(&reference.rows) {
                    self.posterior_rows_checked += 1;
                    let d = (a.posterior - b.posterior).abs();
                    self.max_posterior_diff = self.max_posterior_diff.max(d);
                    if d.is_nan() || d > POSTERIOR_TOLERANCE {
                        self.fail(
                            label,
                            format!(
                                "step {time} space {space} `{}`: posterior differs by {d:e}",
                                a.hypothesis
                            ),
                        );
                    }
                }
            }
        }

        match (global_welfare(history, policy), oracle_welfare(history, policy)) {
            (Ok(report), Ok(reference)) => {
                let d = (report.total - reference).abs();
                self.max_welfare_diff = self.max_welfare_diff.max(d);
                if d.is_nan() || d > WELFARE_TOLERANCE {
                    self.fail(label, format!("welfare differs by {d:e}"));
                }
            }
            (m, r) => self.fail(label, format!("welfare: main {:?} oracle {:?}", m.err(), r.err())),
        }
    }
}

/// Checks `count` random instances drawn from `rng`.
pub fn verify_random<R: Rng + ?Sized>(rng: &mut R, count: usize, bounds: &InstanceBounds, report: &mut VerifyReport) {
    for n in 0..count {
        let instance = random_instance(rng, bounds);
        report.check(&format!("random#{n}"), &instance);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = InstanceBounds::default();
        for _ in 0..50 {
            let i = random_instance(&mut rng, &b);
            assert!(i.history.system().cell_count() <= 3);
            assert!(i.history.horizon() <= 3);
            assert!((1..=8).contains(&i.policy.hypotheses.len()));
            assert!(i.history.replays());
        }
    }

    #[test]
    fn small_suite_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut report = VerifyReport::default();
        verify_random(&mut rng, 25, &InstanceBounds::default(), &mut report);
        assert!(report.passed, "{:?}", report.failures);
        assert_eq!(report.cases, 25);
    }
}

//! Random well-formed expressions for fuzzing and randomized verification.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{HypothesisWorld, TimeRef, Unit, UtilityExpr};
use crate::structures::{Space, Structure};

/// A random expression valid for `world`, at most `depth` operator levels deep.
pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, world: HypothesisWorld, depth: usize) -> UtilityExpr {
    gen(rng, world, depth, false)
}

fn unit<R: Rng + ?Sized>(rng: &mut R) -> Unit {
    let v = match rng.random_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        2 => rng.random_range(0..=8) as f64 / 8.0,
        _ => rng.random::<f64>(),
    };
    Unit::new(v).expect("in range")
}

fn time<R: Rng + ?Sized>(rng: &mut R, world: HypothesisWorld, bound: bool) -> TimeRef {
    if bound && rng.random_bool(0.5) {
        TimeRef::Step
    } else {
        TimeRef::At(rng.random_range(0..=world.horizon))
    }
}

fn space<R: Rng + ?Sized>(rng: &mut R, world: HypothesisWorld) -> Space {
    let cells: Vec<usize> = (0..world.cell_count).filter(|_| rng.random_bool(0.5)).collect();
    if cells.is_empty() {
        Space::single(rng.random_range(0..world.cell_count))
    } else {
        Space::new(cells).expect("non-empty")
    }
}

fn gen<R: Rng + ?Sized>(rng: &mut R, world: HypothesisWorld, depth: usize, bound: bool) -> UtilityExpr {
    if depth == 0 || rng.random_bool(0.35) {
        return match rng.random_range(0..4) {
            0 => UtilityExpr::Const(unit(rng)),
            1 => UtilityExpr::Alive {
                cell: rng.random_range(0..world.cell_count),
                t: time(rng, world, bound),
            },
            2 => UtilityExpr::FracLive {
                space: space(rng, world),
                t: time(rng, world, bound),
            },
            _ => {
                let space = space(rng, world);
                let values = (0..space.len())
                    .map(|_| rng.random_range(0..world.state_count) as u8)
                    .collect();
                UtilityExpr::Match {
                    structure: Structure::new(space, values).expect("sized to space"),
                    t: time(rng, world, bound),
                }
            }
        };
    }
    let next = depth - 1;
    let sub = |rng: &mut R, bound| Box::new(gen(rng, world, next, bound));
    type Ctor = fn(Box<UtilityExpr>, Box<UtilityExpr>) -> UtilityExpr;
    const BINARY: [Ctor; 5] = [
        UtilityExpr::Add,
        UtilityExpr::Sub,
        UtilityExpr::Mul,
        UtilityExpr::Min,
        UtilityExpr::Max,
    ];
    match rng.random_range(0..4) {
        0 => UtilityExpr::TimeMean(sub(rng, true)),
        1 => {
            let gamma = Unit::new(rng.random_range(0.01..0.99)).expect("interior");
            UtilityExpr::Discount {
                gamma,
                body: sub(rng, true),
            }
        }
        2 => UtilityExpr::Clamp(sub(rng, bound)),
        _ => {
            let ctor = BINARY.choose(rng).expect("non-empty");
            let a = sub(rng, bound);
            let b = sub(rng, bound);
            ctor(a, b)
        }
    }
}

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{TimeRef, Unit, UtilityExpr};
use crate::structures::{Space, Structure};

pub const DEFAULT_MAX_HYPOTHESES: usize = 10_000;

/// DSL operators, in grammar order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Const,
    Alive,
    FracLive,
    Match,
    TimeMean,
    Discount,
    Add,
    Sub,
    Mul,
    Min,
    Max,
    Clamp,
}

impl Operator {
    pub const ALL: [Operator; 12] = [
        Operator::Const,
        Operator::Alive,
        Operator::FracLive,
        Operator::Match,
        Operator::TimeMean,
        Operator::Discount,
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Min,
        Operator::Max,
        Operator::Clamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Const => "const",
            Operator::Alive => "alive",
            Operator::FracLive => "fraclive",
            Operator::Match => "match",
            Operator::TimeMean => "timemean",
            Operator::Discount => "discount",
            Operator::Add => "add",
            Operator::Sub => "sub",
            Operator::Mul => "mul",
            Operator::Min => "min",
            Operator::Max => "max",
            Operator::Clamp => "clamp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Number of argument slots, scalar attributes included.
    pub fn arity(self) -> usize {
        match self {
            Operator::Const | Operator::TimeMean | Operator::Clamp => 1,
            _ => 2,
        }
    }
}

/// The world an enumerated hypothesis must fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisWorld {
    pub cell_count: usize,
    pub state_count: usize,
    pub horizon: usize,
}

/// Operators and literal pools allowed in enumerated hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorWhitelist {
    pub operators: BTreeSet<Operator>,
    /// Literals for `const`.
    pub constants: Vec<Unit>,
    /// Discount factors for `discount`.
    pub gammas: Vec<Unit>,
    /// Spaces for `fraclive` and `match`; `alive` ranges over the cells they
    /// cover. When empty, every single cell is used.
    pub spaces: Vec<Space>,
}

impl OperatorWhitelist {
    pub fn new(operators: impl IntoIterator<Item = Operator>) -> Self {
        OperatorWhitelist {
            operators: operators.into_iter().collect(),
            constants: [0.0, 0.5, 1.0].map(|v| Unit::new(v).unwrap()).to_vec(),
            gammas: vec![Unit::new(0.5).unwrap()],
            spaces: Vec::new(),
        }
    }

    pub fn with_constants(mut self, constants: &[f64]) -> Self {
        self.constants = constants.iter().filter_map(|&v| Unit::new(v)).collect();
        self
    }

    fn has(&self, op: Operator) -> bool {
        self.operators.contains(&op)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumerateError {
    #[error("max_nodes must be at least 1")]
    ZeroNodes,
    #[error("more than {cap} hypotheses")]
    CapExceeded { cap: usize },
    #[error("discount factor {0} is not strictly inside (0, 1)")]
    InvalidGamma(String),
}

/// Every well-formed expression with at most `max_nodes` nodes, ordered by
/// node count and then by operator rank and operands.
pub fn enumerate_hypotheses(
    world: HypothesisWorld,
    max_nodes: usize,
    whitelist: &OperatorWhitelist,
    cap: usize,
) -> Result<Vec<UtilityExpr>, EnumerateError> {
    if max_nodes == 0 {
        return Err(EnumerateError::ZeroNodes);
    }
    if let Some(g) = whitelist.gammas.iter().find(|g| !g.is_interior()) {
        return Err(EnumerateError::InvalidGamma(g.to_string()));
    }
    let mut gen = Generator {
        world,
        whitelist,
        cap,
        produced: 0,
        levels: HashMap::new(),
    };
    let mut out = Vec::new();
    for size in 1..=max_nodes {
        let mut level: Vec<UtilityExpr> = gen.level(size, false)?.to_vec();
        level.sort();
        level.dedup();
        out.extend(level);
        if out.len() > cap {
            return Err(EnumerateError::CapExceeded { cap });
        }
    }
    Ok(out)
}

struct Generator<'a> {
    world: HypothesisWorld,
    whitelist: &'a OperatorWhitelist,
    cap: usize,
    produced: usize,
    // (size, inside a step binder) -> expressions of exactly that size.
    levels: HashMap<(usize, bool), Vec<UtilityExpr>>,
}

impl Generator<'_> {
    fn bump(&mut self, n: usize) -> Result<(), EnumerateError> {
        // Intermediate levels inside binders count too, so a runaway
        // whitelist fails fast instead of exhausting memory.
        self.produced += n;
        if self.produced > self.cap.saturating_mul(16) {
            return Err(EnumerateError::CapExceeded { cap: self.cap });
        }
        Ok(())
    }

    fn level(&mut self, size: usize, bound: bool) -> Result<&[UtilityExpr], EnumerateError> {
        if !self.levels.contains_key(&(size, bound)) {
            let built = if size == 1 {
                self.leaves(bound)
            } else {
                self.compound(size, bound)?
            };
            self.bump(built.len())?;
            self.levels.insert((size, bound), built);
        }
        Ok(&self.levels[&(size, bound)])
    }

    fn times(&self, bound: bool) -> Vec<TimeRef> {
        let mut times: Vec<TimeRef> = (0..=self.world.horizon).map(TimeRef::At).collect();
        if bound {
            times.push(TimeRef::Step);
        }
        times
    }

    fn spaces(&self) -> Vec<Space> {
        if self.whitelist.spaces.is_empty() {
            (0..self.world.cell_count).map(Space::single).collect()
        } else {
            self.whitelist.spaces.clone()
        }
    }

    fn leaves(&self, bound: bool) -> Vec<UtilityExpr> {
        let wl = self.whitelist;
        let times = self.times(bound);
        let mut out = Vec::new();
        if wl.has(Operator::Const) {
            out.extend(wl.constants.iter().map(|&c| UtilityExpr::Const(c)));
        }
        if wl.has(Operator::Alive) {
            let cells: BTreeSet<usize> = self.spaces().iter().flat_map(|s| s.cells().to_vec()).collect();
            for cell in cells {
                out.extend(times.iter().map(|&t| UtilityExpr::Alive { cell, t }));
            }
        }
        if wl.has(Operator::FracLive) {
            for space in self.spaces() {
                out.extend(times.iter().map(|&t| UtilityExpr::FracLive {
                    space: space.clone(),
                    t,
                }));
            }
        }
        if wl.has(Operator::Match) {
            for space in self.spaces() {
                let total = (self.world.state_count as u64).pow(space.len() as u32);
                for rank in 0..total {
                    let mut values = vec![0; space.len()];
                    let mut r = rank;
                    for v in values.iter_mut().rev() {
                        *v = (r % self.world.state_count as u64) as u8;
                        r /= self.world.state_count as u64;
                    }
                    let structure = Structure::new(space.clone(), values).expect("sized to space");
                    out.extend(times.iter().map(|&t| UtilityExpr::Match {
                        structure: structure.clone(),
                        t,
                    }));
                }
            }
        }
        out
    }

    fn compound(&mut self, size: usize, bound: bool) -> Result<Vec<UtilityExpr>, EnumerateError> {
        let wl = self.whitelist;
        let mut out = Vec::new();

        if wl.has(Operator::TimeMean) {
            let bodies = self.level(size - 1, true)?.to_vec();
            out.extend(bodies.into_iter().map(|b| UtilityExpr::TimeMean(Box::new(b))));
        }
        if wl.has(Operator::Discount) && !wl.gammas.is_empty() {
            let bodies = self.level(size - 1, true)?.to_vec();
            for &gamma in &wl.gammas {
                out.extend(bodies.iter().map(|b| UtilityExpr::Discount {
                    gamma,
                    body: Box::new(b.clone()),
                }));
            }
        }
        if wl.has(Operator::Clamp) {
            let bodies = self.level(size - 1, bound)?.to_vec();
            out.extend(bodies.into_iter().map(|b| UtilityExpr::Clamp(Box::new(b))));
        }

        type Ctor = fn(Box<UtilityExpr>, Box<UtilityExpr>) -> UtilityExpr;
        let binaries: [(Operator, Ctor); 5] = [
            (Operator::Add, UtilityExpr::Add),
            (Operator::Sub, UtilityExpr::Sub),
            (Operator::Mul, UtilityExpr::Mul),
            (Operator::Min, UtilityExpr::Min),
            (Operator::Max, UtilityExpr::Max),
        ];
        if binaries.iter().any(|(op, _)| wl.has(*op)) && size >= 3 {
            for left in 1..size - 1 {
                let lhs = self.level(left, bound)?.to_vec();
                let rhs = self.level(size - 1 - left, bound)?.to_vec();
                for (op, ctor) in binaries {
                    if !wl.has(op) {
                        continue;
                    }
                    self.bump(lhs.len() * rhs.len())?;
                    for a in &lhs {
                        for b in &rhs {
                            out.push(ctor(Box::new(a.clone()), Box::new(b.clone())));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

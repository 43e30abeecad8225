//! Deterministic cellular systems over a finite cell set.
//!
//! A [`CellularSystem`] bundles the cell set, the state alphabet and a
//! synchronous transition rule. Iterating the rule from an initial
//! [`WorldState`] yields a [`History`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single cell value, `0..state_count`.
pub type CellState = u8;

/// Largest alphabet a system may declare.
pub const MAX_STATES: usize = 36;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error("elementary rule number {0} is outside 0..=255")]
    RuleNumberOutOfRange(u32),
    #[error("dimension `{0}` must be at least 1")]
    ZeroDimension(&'static str),
    #[error("neighbor count {0} is outside 0..=8")]
    InvalidNeighborCount(u8),
    #[error("state count must be in 1..={MAX_STATES}, got {0}")]
    InvalidStateCount(usize),
    #[error("neighborhood of cell {cell} references cell {index}, but there are only {cell_count} cells")]
    NeighborOutOfRange {
        cell: usize,
        index: usize,
        cell_count: usize,
    },
    #[error("expected {expected} neighborhoods (one per cell), got {actual}")]
    NeighborhoodCount { expected: usize, actual: usize },
    #[error("transition table has no entry for neighborhood `{0}`")]
    MissingTableEntry(String),
    #[error("transition table entry `{key}` is malformed: {reason}")]
    MalformedTableEntry { key: String, reason: String },
    #[error("state has {actual} cells but the system has {expected}")]
    StateLength { expected: usize, actual: usize },
    #[error("cell {cell} holds state {value}, outside the alphabet of size {state_count}")]
    StateValue {
        cell: usize,
        value: CellState,
        state_count: usize,
    },
    #[error("character `{0}` is not a valid cell state")]
    InvalidStateChar(char),
}

/// Treatment of neighbors that fall outside the finite cell set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Toroidal,
    FixedZero,
}

/// Geometric arrangement of the cells, when there is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Topology {
    Line {
        width: usize,
    },
    Grid {
        width: usize,
        height: usize,
    },
    /// No geometry; dependencies come from explicit neighborhoods.
    Graph {
        cells: usize,
    },
}

impl Topology {
    pub fn cell_count(&self) -> usize {
        match *self {
            Topology::Line { width } => width,
            Topology::Grid { width, height } => width * height,
            Topology::Graph { cells } => cells,
        }
    }
}

/// Birth/survival neighbor counts for a Moore-neighborhood rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LifeRule {
    birth: [bool; 9],
    survive: [bool; 9],
}

impl LifeRule {
    pub fn new(birth: &[u8], survive: &[u8]) -> Result<Self, SystemError> {
        let mut rule = LifeRule {
            birth: [false; 9],
            survive: [false; 9],
        };
        for &n in birth {
            *rule
                .birth
                .get_mut(n as usize)
                .ok_or(SystemError::InvalidNeighborCount(n))? = true;
        }
        for &n in survive {
            *rule
                .survive
                .get_mut(n as usize)
                .ok_or(SystemError::InvalidNeighborCount(n))? = true;
        }
        Ok(rule)
    }

    /// Conway's Game of Life, B3/S23.
    pub fn conway() -> Self {
        Self::new(&[3], &[2, 3]).expect("static counts")
    }

    pub fn is_born(&self, live_neighbors: usize) -> bool {
        self.birth[live_neighbors]
    }

    pub fn survives(&self, live_neighbors: usize) -> bool {
        self.survive[live_neighbors]
    }

    /// Rulestring in `B3/S23` notation.
    pub fn rulestring(&self) -> String {
        let digits = |flags: &[bool; 9]| {
            flags
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(n, _)| char::from(b'0' + n as u8))
                .collect::<String>()
        };
        format!("B{}/S{}", digits(&self.birth), digits(&self.survive))
    }
}

/// Lookup-table rule: each cell reads the states of its own neighborhood
/// and maps the resulting tuple through a shared table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRule {
    neighborhoods: Vec<Vec<usize>>,
    entries: BTreeMap<Vec<CellState>, CellState>,
    // Dense copy of `entries`, keyed by neighborhood size, indexed by the
    // tuple read as a base-|S| number.
    dense: BTreeMap<usize, Vec<CellState>>,
}

impl TableRule {
    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.neighborhoods
    }

    pub fn entries(&self) -> &BTreeMap<Vec<CellState>, CellState> {
        &self.entries
    }
}

/// The transition map `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Elementary { rule_number: u8 },
    LifeLike(LifeRule),
    Table(TableRule),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SystemInner {
    topology: Topology,
    state_count: usize,
    rule: Rule,
    boundary: Boundary,
}

/// A finite deterministic cellular system `(C, S, d)`.
///
/// Cloning is cheap; the rule data is shared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellularSystem {
    inner: Arc<SystemInner>,
}

impl CellularSystem {
    /// One-dimensional binary automaton using Wolfram rule numbering.
    pub fn elementary(rule_number: u32, width: usize, boundary: Boundary) -> Result<Self, SystemError> {
        let rule_number = u8::try_from(rule_number).map_err(|_| SystemError::RuleNumberOutOfRange(rule_number))?;
        if width == 0 {
            return Err(SystemError::ZeroDimension("width"));
        }
        Ok(Self::from_parts(
            Topology::Line { width },
            2,
            Rule::Elementary { rule_number },
            boundary,
        ))
    }

    /// Two-dimensional binary automaton with a Moore neighborhood.
    pub fn life_like(
        birth: &[u8],
        survive: &[u8],
        width: usize,
        height: usize,
        boundary: Boundary,
    ) -> Result<Self, SystemError> {
        let rule = LifeRule::new(birth, survive)?;
        if width == 0 {
            return Err(SystemError::ZeroDimension("width"));
        }
        if height == 0 {
            return Err(SystemError::ZeroDimension("height"));
        }
        Ok(Self::from_parts(
            Topology::Grid { width, height },
            2,
            Rule::LifeLike(rule),
            boundary,
        ))
    }

    /// Arbitrary dependency sets with a shared lookup table. The table must
    /// cover every tuple over the alphabet for every neighborhood size in use.
    pub fn table(
        cell_count: usize,
        state_count: usize,
        neighborhoods: Vec<Vec<usize>>,
        entries: BTreeMap<Vec<CellState>, CellState>,
    ) -> Result<Self, SystemError> {
        if cell_count == 0 {
            return Err(SystemError::ZeroDimension("cells"));
        }
        if state_count == 0 || state_count > MAX_STATES {
            return Err(SystemError::InvalidStateCount(state_count));
        }
        if neighborhoods.len() != cell_count {
            return Err(SystemError::NeighborhoodCount {
                expected: cell_count,
                actual: neighborhoods.len(),
            });
        }
        for (cell, hood) in neighborhoods.iter().enumerate() {
            if let Some(&index) = hood.iter().find(|&&c| c >= cell_count) {
                return Err(SystemError::NeighborOutOfRange {
                    cell,
                    index,
                    cell_count,
                });
            }
        }
        for (key, &out) in &entries {
            if let Some(&v) = key
                .iter()
                .chain(std::iter::once(&out))
                .find(|&&v| v as usize >= state_count)
            {
                return Err(SystemError::MalformedTableEntry {
                    key: format_states(key),
                    reason: format!("state {v} outside alphabet of size {state_count}"),
                });
            }
        }

        let mut dense = BTreeMap::new();
        for hood in &neighborhoods {
            let arity = hood.len();
            if dense.contains_key(&arity) {
                continue;
            }
            let total = state_count
                .checked_pow(arity as u32)
                .ok_or_else(|| SystemError::MissingTableEntry(format!("<{arity}-tuples>")))?;
            let mut lookup = Vec::with_capacity(total);
            let mut tuple = vec![0 as CellState; arity];
            for _ in 0..total {
                let out = entries
                    .get(&tuple)
                    .copied()
                    .ok_or_else(|| SystemError::MissingTableEntry(format_states(&tuple)))?;
                lookup.push(out);
                increment_base(&mut tuple, state_count);
            }
            dense.insert(arity, lookup);
        }

        let rule = TableRule {
            neighborhoods,
            entries,
            dense,
        };
        Ok(Self::from_parts(
            Topology::Graph { cells: cell_count },
            state_count,
            Rule::Table(rule),
            Boundary::Toroidal,
        ))
    }

    fn from_parts(topology: Topology, state_count: usize, rule: Rule, boundary: Boundary) -> Self {
        CellularSystem {
            inner: Arc::new(SystemInner {
                topology,
                state_count,
                rule,
                boundary,
            }),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.inner.topology.cell_count()
    }

    pub fn state_count(&self) -> usize {
        self.inner.state_count
    }

    pub fn topology(&self) -> Topology {
        self.inner.topology
    }

    pub fn rule(&self) -> &Rule {
        &self.inner.rule
    }

    pub fn boundary(&self) -> Boundary {
        self.inner.boundary
    }

    /// Grid coordinate `(x, y)` of a cell, for systems that have one.
    pub fn coordinate(&self, cell: usize) -> Option<(usize, usize)> {
        if cell >= self.cell_count() {
            return None;
        }
        match self.inner.topology {
            Topology::Line { .. } => Some((cell, 0)),
            Topology::Grid { width, .. } => Some((cell % width, cell / width)),
            Topology::Graph { .. } => None,
        }
    }

    pub fn check_state(&self, state: &WorldState) -> Result<(), SystemError> {
        let expected = self.cell_count();
        if state.len() != expected {
            return Err(SystemError::StateLength {
                expected,
                actual: state.len(),
            });
        }
        if let Some((cell, &value)) = state
            .values()
            .iter()
            .enumerate()
            .find(|(_, &v)| v as usize >= self.state_count())
        {
            return Err(SystemError::StateValue {
                cell,
                value,
                state_count: self.state_count(),
            });
        }
        Ok(())
    }

    /// Applies `d` once, synchronously.
    pub fn step(&self, state: &WorldState) -> Result<WorldState, SystemError> {
        self.check_state(state)?;
        Ok(self.step_unchecked(state))
    }

    pub(crate) fn step_unchecked(&self, state: &WorldState) -> WorldState {
        let cells = state.values();
        let next = match &self.inner.rule {
            Rule::Elementary { rule_number } => self.step_elementary(*rule_number, cells),
            Rule::LifeLike(rule) => self.step_life(rule, cells),
            Rule::Table(rule) => self.step_table(rule, cells),
        };
        WorldState(next)
    }

    fn step_elementary(&self, rule_number: u8, cells: &[CellState]) -> Vec<CellState> {
        let width = cells.len();
        let read = |x: isize| -> u8 {
            if (0..width as isize).contains(&x) {
                cells[x as usize]
            } else {
                match self.inner.boundary {
                    Boundary::Toroidal => cells[x.rem_euclid(width as isize) as usize],
                    Boundary::FixedZero => 0,
                }
            }
        };
        (0..width as isize)
            .map(|x| {
                let n = (read(x - 1) << 2) | (read(x) << 1) | read(x + 1);
                (rule_number >> n) & 1
            })
            .collect()
    }

    fn step_life(&self, rule: &LifeRule, cells: &[CellState]) -> Vec<CellState> {
        let Topology::Grid { width, height } = self.inner.topology else {
            unreachable!("life-like rules are only constructed on grids");
        };
        let (w, h) = (width as isize, height as isize);
        let read = |x: isize, y: isize| -> usize {
            let (x, y) = match self.inner.boundary {
                Boundary::Toroidal => (x.rem_euclid(w), y.rem_euclid(h)),
                Boundary::FixedZero => {
                    if !(0..w).contains(&x) || !(0..h).contains(&y) {
                        return 0;
                    }
                    (x, y)
                }
            };
            cells[(y * w + x) as usize] as usize
        };
        let mut next = Vec::with_capacity(cells.len());
        for y in 0..h {
            for x in 0..w {
                let mut live = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx != 0 || dy != 0 {
                            live += read(x + dx, y + dy);
                        }
                    }
                }
                let alive = cells[(y * w + x) as usize] == 1;
                let on = if alive { rule.survives(live) } else { rule.is_born(live) };
                next.push(on as CellState);
            }
        }
        next
    }

    fn step_table(&self, rule: &TableRule, cells: &[CellState]) -> Vec<CellState> {
        let base = self.inner.state_count;
        rule.neighborhoods
            .iter()
            .map(|hood| {
                let index = hood.iter().fold(0usize, |acc, &c| acc * base + cells[c] as usize);
                rule.dense[&hood.len()][index]
            })
            .collect()
    }

    /// Iterates the rule `horizon` times from `initial`.
    pub fn history(&self, initial: WorldState, horizon: usize) -> Result<History, SystemError> {
        self.check_state(&initial)?;
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(initial);
        for n in 1..=horizon {
            let next = self.step_unchecked(&states[n - 1]);
            states.push(next);
        }
        Ok(History {
            system: self.clone(),
            states,
        })
    }

    /// Parses a state written as one alphabet digit per cell (row-major for
    /// grids). Whitespace and `/` separators are ignored.
    pub fn parse_state(&self, text: &str) -> Result<WorldState, SystemError> {
        let state = WorldState::parse(text)?;
        self.check_state(&state)?;
        Ok(state)
    }
}

fn increment_base(digits: &mut [CellState], base: usize) {
    for d in digits.iter_mut().rev() {
        if (*d as usize) + 1 < base {
            *d += 1;
            return;
        }
        *d = 0;
    }
}

pub(crate) fn state_char(v: CellState) -> char {
    char::from_digit(v as u32, MAX_STATES as u32).expect("state below alphabet cap")
}

pub(crate) fn format_states(values: &[CellState]) -> String {
    values.iter().map(|&v| state_char(v)).collect()
}

/// An assignment of a state to every cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState(Vec<CellState>);

impl WorldState {
    pub fn new(values: Vec<CellState>) -> Self {
        WorldState(values)
    }

    pub fn zeros(cells: usize) -> Self {
        WorldState(vec![0; cells])
    }

    pub fn parse(text: &str) -> Result<Self, SystemError> {
        text.chars()
            .filter(|c| !c.is_whitespace() && *c != '/')
            .map(|c| {
                c.to_digit(MAX_STATES as u32)
                    .map(|d| d as CellState)
                    .ok_or(SystemError::InvalidStateChar(c))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(WorldState)
    }

    pub fn values(&self) -> &[CellState] {
        &self.0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [CellState] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, cell: usize) -> Option<CellState> {
        self.0.get(cell).copied()
    }
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_states(&self.0))
    }
}

impl Serialize for WorldState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// The states `h(0..=T)` generated by a system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    system: CellularSystem,
    states: Vec<WorldState>,
}

impl History {
    /// Assembles a history from explicit states without replaying the rule.
    /// Used for counterfactual hybrids, whose prefix is not generated by `d`.
    pub(crate) fn from_states(system: CellularSystem, states: Vec<WorldState>) -> Self {
        debug_assert!(!states.is_empty());
        History { system, states }
    }

    pub fn system(&self) -> &CellularSystem {
        &self.system
    }

    pub fn states(&self) -> &[WorldState] {
        &self.states
    }

    pub fn state(&self, t: usize) -> Option<&WorldState> {
        self.states.get(t)
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &WorldState {
        &self.states[0]
    }

    /// Checks `states[n] == d(states[n-1])` for every step.
    pub fn replays(&self) -> bool {
        self.states
            .windows(2)
            .all(|pair| self.system.step_unchecked(&pair[0]) == pair[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(s: &str) -> WorldState {
        WorldState::parse(s).unwrap()
    }

    #[test]
    fn rule_zero_clears_everything() {
        let sys = CellularSystem::elementary(0, 5, Boundary::Toroidal).unwrap();
        assert_eq!(sys.step(&ws("11011")).unwrap(), ws("00000"));
    }

    #[test]
    fn rule_204_is_identity() {
        let sys = CellularSystem::elementary(204, 5, Boundary::Toroidal).unwrap();
        assert_eq!(sys.step(&ws("01011")).unwrap(), ws("01011"));
    }

    #[test]
    fn rule_110_single_cell() {
        // 110 = 0b01101110: 100 -> 0, 010 -> 1, 001 -> 1.
        let sys = CellularSystem::elementary(110, 5, Boundary::Toroidal).unwrap();
        assert_eq!(sys.step(&ws("00100")).unwrap(), ws("01100"));
    }

    #[test]
    fn rule_255_fills() {
        let sys = CellularSystem::elementary(255, 4, Boundary::FixedZero).unwrap();
        assert_eq!(sys.step(&ws("0000")).unwrap(), ws("1111"));
    }

    #[test]
    fn fixed_zero_boundary_differs_from_torus() {
        // Rule 2 fires only on neighborhood 001.
        let torus = CellularSystem::elementary(2, 3, Boundary::Toroidal).unwrap();
        let fixed = CellularSystem::elementary(2, 3, Boundary::FixedZero).unwrap();
        assert_eq!(torus.step(&ws("100")).unwrap(), ws("001"));
        assert_eq!(fixed.step(&ws("100")).unwrap(), ws("000"));
    }

    #[test]
    fn elementary_errors() {
        assert_eq!(
            CellularSystem::elementary(256, 5, Boundary::Toroidal),
            Err(SystemError::RuleNumberOutOfRange(256))
        );
        assert_eq!(
            CellularSystem::elementary(30, 0, Boundary::Toroidal),
            Err(SystemError::ZeroDimension("width"))
        );
    }

    #[test]
    fn life_block_is_still() {
        let sys = CellularSystem::life_like(&[3], &[2, 3], 4, 4, Boundary::Toroidal).unwrap();
        let block = ws("0000/0110/0110/0000");
        assert_eq!(sys.step(&block).unwrap(), block);
        let dead = WorldState::zeros(16);
        assert_eq!(sys.step(&dead).unwrap(), dead);
    }

    #[test]
    fn life_blinker_oscillates() {
        let sys = CellularSystem::life_like(&[3], &[2, 3], 5, 5, Boundary::Toroidal).unwrap();
        let horizontal = ws("00000/00000/01110/00000/00000");
        let vertical = ws("00000/00100/00100/00100/00000");
        assert_eq!(sys.step(&horizontal).unwrap(), vertical);
        assert_eq!(sys.step(&vertical).unwrap(), horizontal);
    }

    #[test]
    fn life_errors() {
        assert_eq!(
            CellularSystem::life_like(&[9], &[2], 3, 3, Boundary::Toroidal),
            Err(SystemError::InvalidNeighborCount(9))
        );
        assert_eq!(
            CellularSystem::life_like(&[3], &[2], 3, 0, Boundary::Toroidal),
            Err(SystemError::ZeroDimension("height"))
        );
        assert_eq!(LifeRule::conway().rulestring(), "B3/S23");
    }

    fn table(pairs: &[(&[u8], u8)]) -> BTreeMap<Vec<u8>, u8> {
        pairs.iter().map(|(k, v)| (k.to_vec(), *v)).collect()
    }

    #[test]
    fn table_flip_has_period_two() {
        let sys = CellularSystem::table(1, 2, vec![vec![0]], table(&[(&[0], 1), (&[1], 0)])).unwrap();
        let h = sys.history(ws("0"), 3).unwrap();
        let got: Vec<String> = h.states().iter().map(|s| s.to_string()).collect();
        assert_eq!(got, ["0", "1", "0", "1"]);
        assert_eq!(sys.step(&ws("1")).unwrap(), ws("0"));
    }

    #[test]
    fn table_swap_neighbors() {
        let sys = CellularSystem::table(2, 2, vec![vec![1], vec![0]], table(&[(&[0], 0), (&[1], 1)])).unwrap();
        assert_eq!(sys.step(&ws("01")).unwrap(), ws("10"));
    }

    #[test]
    fn table_errors() {
        assert_eq!(
            CellularSystem::table(1, 2, vec![vec![0]], table(&[(&[0], 1)])),
            Err(SystemError::MissingTableEntry("1".into()))
        );
        assert!(matches!(
            CellularSystem::table(2, 2, vec![vec![0], vec![2]], table(&[(&[0], 0), (&[1], 1)])),
            Err(SystemError::NeighborOutOfRange { cell: 1, index: 2, .. })
        ));
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let sys = CellularSystem::elementary(30, 3, Boundary::Toroidal).unwrap();
        assert!(matches!(sys.step(&ws("01")), Err(SystemError::StateLength { .. })));
        assert!(matches!(
            sys.step(&ws("012")),
            Err(SystemError::StateValue { cell: 2, .. })
        ));
    }

    #[test]
    fn history_shapes() {
        let sys = CellularSystem::elementary(204, 2, Boundary::Toroidal).unwrap();
        let h = sys.history(ws("01"), 2).unwrap();
        assert_eq!(h.states(), &[ws("01"), ws("01"), ws("01")]);
        assert_eq!(h.horizon(), 2);

        let sys = CellularSystem::elementary(110, 5, Boundary::Toroidal).unwrap();
        let h = sys.history(ws("00100"), 1).unwrap();
        assert_eq!(h.states(), &[ws("00100"), ws("01100")]);
        assert!(h.replays());

        let h0 = sys.history(ws("00100"), 0).unwrap();
        assert_eq!(h0.states().len(), 1);
    }

    #[test]
    fn grid_coordinates() {
        let sys = CellularSystem::life_like(&[3], &[2, 3], 4, 3, Boundary::Toroidal).unwrap();
        assert_eq!(sys.coordinate(5), Some((1, 1)));
        assert_eq!(sys.coordinate(12), None);
    }
}

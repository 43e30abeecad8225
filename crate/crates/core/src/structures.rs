//! Spaces (finite cell subsets) and the structures that live on them.
//!
//! Both enumerations here have a frozen canonical order: structures count
//! upward in base `|S|` with the lowest cell index as the most significant
//! digit, and spaces sort by size and then lexicographically.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellsys::{format_states, CellState, CellularSystem, Topology, WorldState};

/// Default cap on `|S|^|Spc|`.
pub const DEFAULT_MAX_STRUCTURES: u64 = 1 << 20;
/// Default cap on `k` in size-bounded space families.
pub const DEFAULT_MAX_SPACE_SIZE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("a space must contain at least one cell")]
    EmptySpace,
    #[error("cell {cell} is outside a world of {cell_count} cells")]
    CellOutOfRange { cell: usize, cell_count: usize },
    #[error("structure has {values} values for a space of {cells} cells")]
    ValueCount { cells: usize, values: usize },
    #[error("structure value {value} is outside the alphabet of size {state_count}")]
    ValueOutOfRange { value: CellState, state_count: usize },
    #[error("{count} structures exceed the enumeration cap of {cap}")]
    TooManyStructures { count: String, cap: u64 },
    #[error("space size bound {k} exceeds the cap of {cap}")]
    SpaceSizeCap { k: usize, cap: usize },
    #[error("space family produced no spaces")]
    EmptyFamily,
}

/// Caps that keep enumerations at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_structures: u64,
    pub max_space_size: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_structures: DEFAULT_MAX_STRUCTURES,
            max_space_size: DEFAULT_MAX_SPACE_SIZE,
        }
    }
}

/// A non-empty, sorted, duplicate-free set of cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Space(Vec<usize>);

impl Space {
    /// Normalizes `cells` (sort, dedup). Rejects the empty set.
    pub fn new(mut cells: Vec<usize>) -> Result<Self, StructureError> {
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(StructureError::EmptySpace);
        }
        Ok(Space(cells))
    }

    pub fn single(cell: usize) -> Self {
        Space(vec![cell])
    }

    pub fn cells(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0.binary_search(&cell).is_ok()
    }

    pub fn check(&self, cell_count: usize) -> Result<(), StructureError> {
        match self.0.last() {
            Some(&cell) if cell >= cell_count => Err(StructureError::CellOutOfRange { cell, cell_count }),
            _ => Ok(()),
        }
    }
}

// Size first, then lexicographic on the sorted cells.
impl Ord for Space {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Space {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Space {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Space {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let cells = Vec::<usize>::deserialize(deserializer)?;
        Space::new(cells).map_err(serde::de::Error::custom)
    }
}

/// States assigned to the cells of a space, aligned with its sorted cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Structure {
    space: Space,
    values: Vec<CellState>,
}

impl Structure {
    pub fn new(space: Space, values: Vec<CellState>) -> Result<Self, StructureError> {
        if values.len() != space.len() {
            return Err(StructureError::ValueCount {
                cells: space.len(),
                values: values.len(),
            });
        }
        Ok(Structure { space, values })
    }

    /// Builds a structure from `(cell, state)` pairs in any order.
    pub fn from_pairs(pairs: &[(usize, CellState)]) -> Result<Self, StructureError> {
        let mut pairs = pairs.to_vec();
        pairs.sort_unstable();
        let space = Space::new(pairs.iter().map(|p| p.0).collect())?;
        if space.len() != pairs.len() {
            return Err(StructureError::ValueCount {
                cells: space.len(),
                values: pairs.len(),
            });
        }
        Ok(Structure {
            space,
            values: pairs.into_iter().map(|p| p.1).collect(),
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[CellState] {
        &self.values
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, CellState)> + '_ {
        self.space.cells().iter().copied().zip(self.values.iter().copied())
    }

    pub fn check(&self, cell_count: usize, state_count: usize) -> Result<(), StructureError> {
        self.space.check(cell_count)?;
        match self.values.iter().find(|&&v| v as usize >= state_count) {
            Some(&value) => Err(StructureError::ValueOutOfRange { value, state_count }),
            None => Ok(()),
        }
    }

    /// Position of this structure in the canonical enumeration of its space.
    pub fn rank(&self, state_count: usize) -> u64 {
        self.values
            .iter()
            .fold(0u64, |acc, &v| acc * state_count as u64 + v as u64)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_states(&self.values))
    }
}

impl Serialize for Structure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// `h(i)|_Spc`: the structure a world state holds on a space.
pub fn restrict(state: &WorldState, space: &Space) -> Result<Structure, StructureError> {
    space.check(state.len())?;
    let values = space.cells().iter().map(|&c| state.values()[c]).collect();
    Ok(Structure {
        space: space.clone(),
        values,
    })
}

/// Overwrites the structure's cells in `state`, leaving the rest untouched.
pub fn splice(state: &WorldState, structure: &Structure) -> Result<WorldState, StructureError> {
    structure.space.check(state.len())?;
    let mut out = state.clone();
    for (cell, value) in structure.pairs() {
        out.values_mut()[cell] = value;
    }
    Ok(out)
}

/// Every structure on a space, in canonical order.
#[derive(Debug, Clone)]
pub struct StructureEnumeration {
    space: Space,
    state_count: usize,
    next: u64,
    total: u64,
}

impl StructureEnumeration {
    pub fn total(&self) -> u64 {
        self.total
    }

    /// The structure at a canonical rank.
    pub fn nth_structure(&self, rank: u64) -> Option<Structure> {
        if rank >= self.total {
            return None;
        }
        let base = self.state_count as u64;
        let mut values = vec![0; self.space.len()];
        let mut r = rank;
        for v in values.iter_mut().rev() {
            *v = (r % base) as CellState;
            r /= base;
        }
        Some(Structure {
            space: self.space.clone(),
            values,
        })
    }
}

impl Iterator for StructureEnumeration {
    type Item = Structure;

    fn next(&mut self) -> Option<Structure> {
        let item = self.nth_structure(self.next)?;
        self.next += 1;
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for StructureEnumeration {}

/// All `|S|^|Spc|` structures on `space`, refusing counts above the cap.
pub fn enumerate_structures(
    space: &Space,
    state_count: usize,
    limits: &EnumerationLimits,
) -> Result<StructureEnumeration, StructureError> {
    let total = (state_count as u64)
        .checked_pow(space.len() as u32)
        .filter(|&n| n <= limits.max_structures)
        .ok_or_else(|| StructureError::TooManyStructures {
            count: format!("{state_count}^{}", space.len()),
            cap: limits.max_structures,
        })?;
    Ok(StructureEnumeration {
        space: space.clone(),
        state_count,
        next: 0,
        total,
    })
}

/// Which spaces a welfare sum ranges over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceFamily {
    /// Every subset with 1..=k cells.
    AllUpToSize {
        k: usize,
    },
    ExplicitList {
        spaces: Vec<Space>,
    },
    /// Contiguous runs (1-D and graphs) or axis-aligned rectangles (grids)
    /// with at most k cells. Windows do not wrap around the boundary.
    ConnectedWindows {
        k: usize,
    },
}

/// The spaces of a family, sorted by size then lexicographically, deduplicated.
pub fn enumerate_spaces(
    system: &CellularSystem,
    family: &SpaceFamily,
    limits: &EnumerationLimits,
) -> Result<Vec<Space>, StructureError> {
    let n = system.cell_count();
    let check_k = |k: usize| {
        if k > limits.max_space_size {
            Err(StructureError::SpaceSizeCap {
                k,
                cap: limits.max_space_size,
            })
        } else {
            Ok(())
        }
    };

    let mut spaces = match family {
        SpaceFamily::AllUpToSize { k } => {
            check_k(*k)?;
            let mut out = Vec::new();
            for size in 1..=(*k).min(n) {
                combinations(n, size, &mut out);
            }
            out
        }
        SpaceFamily::ExplicitList { spaces } => {
            for s in spaces {
                s.check(n)?;
            }
            spaces.clone()
        }
        SpaceFamily::ConnectedWindows { k } => {
            check_k(*k)?;
            windows(system.topology(), *k)
        }
    };
    spaces.sort();
    spaces.dedup();
    if spaces.is_empty() {
        return Err(StructureError::EmptyFamily);
    }
    Ok(spaces)
}

fn combinations(n: usize, size: usize, out: &mut Vec<Space>) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(Space(idx.clone()));
        // Advance the rightmost index that still has room.
        let Some(pos) = (0..size).rev().find(|&p| idx[p] < n - size + p) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..size {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

fn windows(topology: Topology, k: usize) -> Vec<Space> {
    let mut out = Vec::new();
    match topology {
        Topology::Grid { width, height } => {
            for h in 1..=height {
                for w in 1..=width {
                    if w * h > k {
                        continue;
                    }
                    for y in 0..=height - h {
                        for x in 0..=width - w {
                            let cells = (y..y + h)
                                .flat_map(|yy| (x..x + w).map(move |xx| yy * width + xx))
                                .collect();
                            out.push(Space(cells));
                        }
                    }
                }
            }
        }
        Topology::Line { width: n } | Topology::Graph { cells: n } => {
            for len in 1..=k.min(n) {
                for start in 0..=n - len {
                    out.push(Space((start..start + len).collect()));
                }
            }
        }
    }
    out
}

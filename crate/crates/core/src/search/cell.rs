use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::reduction::PartialAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Active,
    Expanded,
    Exhausted,
}

/// A power-of-two block `{lo..hi}` of the reduced domain.
///
/// Under the fixed variable order, a cell at depth `k` is exactly the set of
/// assignments agreeing with `prefix`, which fixes variables `0..k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: u64,
    pub parent: Option<u64>,
    pub lo: u64,
    pub hi: u64,
    pub depth: u32,
    pub prefix: PartialAssignment,
    /// Best value of each re-sample, in sample order.
    pub samples: Vec<f64>,
    pub val: Option<f64>,
    pub ub: Option<f64>,
    pub status: CellStatus,
}

impl Cell {
    pub fn root(size: u64) -> Self {
        Cell {
            id: 0,
            parent: None,
            lo: 1,
            hi: size,
            depth: 0,
            prefix: PartialAssignment::new(),
            samples: Vec::new(),
            val: None,
            ub: None,
            status: CellStatus::Active,
        }
    }

    pub fn size(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, x: u64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    fn child(&self, id: u64, lo: u64, hi: u64, bit: bool) -> Cell {
        Cell {
            id,
            parent: Some(self.id),
            lo,
            hi,
            depth: self.depth + 1,
            prefix: self.prefix.clone().with(self.depth as usize, bit),
            samples: Vec::new(),
            val: None,
            ub: None,
            status: CellStatus::Active,
        }
    }
}

/// Splits `cell` into halves with ids `ids`; the lower half fixes the next
/// variable to 0. `cell` is marked expanded.
pub fn expand(cell: &mut Cell, ids: (u64, u64)) -> Result<(Cell, Cell)> {
    if cell.status != CellStatus::Active {
        return Err(contract(format!("cell {} is {:?}, only active cells expand", cell.id, cell.status)));
    }
    if cell.size() < 2 {
        return Err(contract(format!("cell {{{}..{}}} has one point and cannot be split", cell.lo, cell.hi)));
    }
    let mid = cell.lo + (cell.hi - cell.lo) / 2;
    let a = cell.child(ids.0, cell.lo, mid, false);
    let b = cell.child(ids.1, mid + 1, cell.hi, true);
    cell.status = CellStatus::Expanded;
    Ok((a, b))
}

fn rank(a: &Cell, b: &Cell) -> Ordering {
    let ub = |c: &Cell| c.ub.unwrap_or(f64::INFINITY);
    ub(a)
        .total_cmp(&ub(b))
        .then(a.size().cmp(&b.size()))
        .then(b.lo.cmp(&a.lo))
}

/// Active cell of size at least 2 with the highest `ub` (unassessed cells
/// rank first). Ties go to the larger cell, then the smaller `lo`. `None`
/// means nothing is left to expand.
pub fn select_cell(cells: &[Cell]) -> Option<&Cell> {
    cells
        .iter()
        .filter(|c| c.status == CellStatus::Active && c.size() >= 2)
        .max_by(|a, b| rank(a, b))
}

//! Grid environments: stochastic GridWorld (with an optional collision
//! penalty) and predator-prey.

mod gridworld;
mod predator_prey;

pub use gridworld::{gridworld_chi, AugmentedGridWorld, DistanceNorm, GridWorld, GridWorldConfig, GOAL_REWARD};
pub use predator_prey::{PredatorPrey, PredatorPreyConfig, PreyStatus};

/// A cell as `[x, y]`, with `x` the column and `y` the row.
pub type Cell = [usize; 2];

/// The five grid moves, in action-index order.
pub const MOVES: [(i64, i64); 5] = [(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)];

pub const ACTION_NAMES: [&str; 5] = ["up", "down", "left", "right", "stay"];

/// Row-major index `y * width + x`.
#[inline]
pub fn cell_index(width: usize, cell: Cell) -> usize {
    cell[1] * width + cell[0]
}

#[inline]
pub fn cell_of(width: usize, index: usize) -> Cell {
    [index % width, index / width]
}

#[inline]
pub(crate) fn clamp_to_grid(x: i64, y: i64, width: usize, height: usize) -> Cell {
    [x.clamp(0, width as i64 - 1) as usize, y.clamp(0, height as i64 - 1) as usize]
}

pub(crate) fn check_cell(what: &str, cell: Cell, width: usize, height: usize) -> crate::Result<()> {
    if cell[0] >= width || cell[1] >= height {
        return Err(crate::Error::config(
            what,
            format!("cell ({}, {}) lies outside the {width}x{height} grid", cell[0], cell[1]),
        ));
    }
    Ok(())
}

#[inline]
pub(crate) fn manhattan(a: Cell, b: Cell) -> usize {
    a[0].abs_diff(b[0]) + a[1].abs_diff(b[1])
}

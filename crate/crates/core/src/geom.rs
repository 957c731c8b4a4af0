//! Grid geometry primitives shared by every pipeline stage.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One electrode position on the array. `x` is the column, `y` the row,
/// both 0-based with the origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    /// The four orthogonal neighbors (droplets cannot move diagonally).
    pub fn neighbors4(&self) -> [Cell; 4] {
        [
            Cell::new(self.x, self.y - 1),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x + 1, self.y),
        ]
    }

    pub fn is_adjacent4(&self, other: &Cell) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }

    /// Chebyshev (king-move) distance, the metric behind the fluidic
    /// separation rules.
    pub fn chebyshev(&self, other: &Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn manhattan(&self, other: &Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn in_bounds(&self, width: i32, height: i32) -> bool {
        self.x >= 0 && self.x < width && self.y >= 0 && self.y < height
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Returns true when `a` and `b` sit on opposite sides of `mid`
/// (the electrode pattern that splits a droplet).
pub fn opposite_about(mid: &Cell, a: &Cell, b: &Cell) -> bool {
    a.x + b.x == 2 * mid.x && a.y + b.y == 2 * mid.y && mid.is_adjacent4(a) && mid.is_adjacent4(b)
}

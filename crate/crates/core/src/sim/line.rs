//! Integer line rasterisation.

/// Integer grid coordinate: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i64,
    pub y: i64,
}

impl Cell {
    pub const fn new(x: i64, y: i64) -> Self {
        Cell { x, y }
    }
}

impl From<(i64, i64)> for Cell {
    fn from((x, y): (i64, i64)) -> Self {
        Cell { x, y }
    }
}

/// Bresenham walk from `start` to `end`, both inclusive.
///
/// Works in all octants. Consecutive cells are 8-connected; on exact ties the
/// minor coordinate steps toward `end`.
#[derive(Clone, Debug)]
pub struct LineCells {
    dx: i64,
    dy: i64,
    sx: i64,
    sy: i64,
    err: i64,
    current: Cell,
    end: Cell,
    done: bool,
}

impl LineCells {
    pub fn new(start: Cell, end: Cell) -> Self {
        let dx = (end.x - start.x).abs();
        let dy = -(end.y - start.y).abs();
        LineCells {
            dx,
            dy,
            sx: if start.x < end.x { 1 } else { -1 },
            sy: if start.y < end.y { 1 } else { -1 },
            err: dx + dy,
            current: start,
            end,
            done: false,
        }
    }
}

impl Iterator for LineCells {
    type Item = Cell;

    fn next(&mut self) -> Option<Cell> {
        if self.done {
            return None;
        }
        let out = self.current;
        if out == self.end {
            self.done = true;
            return Some(out);
        }
        let e2 = 2 * self.err;
        if e2 >= self.dy {
            self.err += self.dy;
            self.current.x += self.sx;
        }
        if e2 <= self.dx {
            self.err += self.dx;
            self.current.y += self.sy;
        }
        Some(out)
    }
}

/// Ordered Bresenham cell chain from `p0` to `p1` inclusive.
pub fn rasterize_line(p0: Cell, p1: Cell) -> Vec<Cell> {
    LineCells::new(p0, p1).collect()
}

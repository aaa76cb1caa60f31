use crate::error::{Error, Result};

/// Row-major 2D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// First arrival time in seconds; `None` where a cell never ignited.
pub type ArrivalMap = Raster<Option<f64>>;

/// `true` where the cell ignited during the simulation.
pub type BurnMask = Raster<bool>;

impl<T: Clone> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Raster {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "raster {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Raster {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl BurnMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// A burn scar is patchy when some unburnt cell is enclosed by burnt cells,
    /// i.e. not 4-connected through unburnt cells to the raster border.
    pub fn is_patchy(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let mut reached = vec![false; h * w];
        let mut stack = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) && !self.data[r * w + c] {
                    reached[r * w + c] = true;
                    stack.push((r, c));
                }
            }
        }
        while let Some((r, c)) = stack.pop() {
            let neighbours = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbours {
                if nr < h && nc < w {
                    let i = nr * w + nc;
                    if !self.data[i] && !reached[i] {
                        reached[i] = true;
                        stack.push((nr, nc));
                    }
                }
            }
        }
        self.data
            .iter()
            .zip(&reached)
            .any(|(&burnt, &open)| !burnt && !open)
    }
}

impl ArrivalMap {
    pub fn burn_mask(&self) -> BurnMask {
        self.map(|t| t.is_some())
    }
}

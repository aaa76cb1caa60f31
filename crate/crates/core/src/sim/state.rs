use std::f64::consts::PI;

use rand::Rng;

use super::line::{Cell, LineCells};
use super::{SimConfig, SimParams};
use crate::error::Result;
use crate::raster::{ArrivalMap, Raster};
use crate::rng::{seeded, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellState {
    Green,
    Red,
    Black,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

/// Indraft at `at` induced by regularised point sinks at `sinks` (meters).
///
/// `u = s * dx^2 / (2 pi) * sum_b (x_b - x) / max(|x_b - x|, dx)^2`, skipping a
/// sink located exactly at `at` and sinks beyond `cutoff`.
pub fn fire_induced_wind_from(
    at: Vec2,
    sinks: impl IntoIterator<Item = Vec2>,
    sink: f64,
    cell_size: f64,
    cutoff: Option<f64>,
) -> Vec2 {
    let floor2 = cell_size * cell_size;
    let cutoff2 = cutoff.map_or(f64::INFINITY, |r| r * r);
    let (mut sx, mut sy) = (0.0, 0.0);
    for b in sinks {
        let dx = b.x - at.x;
        let dy = b.y - at.y;
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 || r2 > cutoff2 {
            continue;
        }
        let r2 = r2.max(floor2);
        sx += dx / r2;
        sy += dy / r2;
    }
    let k = sink * floor2 / (2.0 * PI);
    Vec2::new(k * sx, k * sy)
}

/// Mutable simulation state over the whole domain, buffer included.
#[derive(Clone, Debug)]
pub struct SimState {
    config: SimConfig,
    side: usize,
    grid: Vec<CellState>,
    ignition_step: Vec<Option<u32>>,
    // red cells in row-major order
    burning: Vec<usize>,
    step: u32,
    rng: SimRng,
}

impl SimState {
    /// Green interior, black fuel break, nothing burning.
    pub fn new(config: &SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let side = config.domain_cells();
        let b = config.buffer_cells();
        let mut grid = vec![CellState::Black; side * side];
        for row in b..side - b {
            for col in b..side - b {
                grid[row * side + col] = CellState::Green;
            }
        }
        Ok(SimState {
            config: config.clone(),
            side,
            grid,
            ignition_step: vec![None; side * side],
            burning: Vec::new(),
            step: 0,
            rng: seeded(seed),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Cells along one side of the domain.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn cell(&self, at: Cell) -> Option<CellState> {
        self.index(at).map(|i| self.grid[i])
    }

    pub fn ignition_step(&self, at: Cell) -> Option<u32> {
        self.index(at).and_then(|i| self.ignition_step[i])
    }

    pub fn cells(&self) -> &[CellState] {
        &self.grid
    }

    pub fn ignition_steps(&self) -> &[Option<u32>] {
        &self.ignition_step
    }

    /// Burning cells in row-major order.
    pub fn burning(&self) -> impl Iterator<Item = Cell> + '_ {
        self.burning.iter().map(|&i| self.coords(i))
    }

    fn index(&self, at: Cell) -> Option<usize> {
        let n = self.side as i64;
        (at.x >= 0 && at.y >= 0 && at.x < n && at.y < n)
            .then(|| at.y as usize * self.side + at.x as usize)
    }

    fn coords(&self, i: usize) -> Cell {
        Cell::new((i % self.side) as i64, (i / self.side) as i64)
    }

    fn center_m(&self, c: Cell) -> Vec2 {
        let h = self.config.cell_size_m;
        Vec2::new((c.x as f64 + 0.5) * h, (c.y as f64 + 0.5) * h)
    }

    /// Marks `i` red with first arrival at step `at_step`; green cells only.
    fn ignite(&mut self, i: usize, at_step: u32, newly: &mut Vec<usize>) -> bool {
        if self.grid[i] != CellState::Green {
            return false;
        }
        self.grid[i] = CellState::Red;
        self.ignition_step[i] = Some(at_step);
        newly.push(i);
        true
    }

    /// Endpoints of the ignition segment of `length_m` through the domain
    /// centre at angle `theta` from the wind (+y) axis.
    pub fn ignition_endpoints(&self, theta: f64, length_m: f64) -> (Cell, Cell) {
        let c = (self.side / 2) as f64;
        let half = 0.5 * length_m / self.config.cell_size_m;
        let (dx, dy) = (half * theta.sin(), half * theta.cos());
        (
            Cell::new((c - dx).round() as i64, (c - dy).round() as i64),
            Cell::new((c + dx).round() as i64, (c + dy).round() as i64),
        )
    }

    /// Sets every green cell on the ignition segment burning at step 0.
    pub fn ignite_line(&mut self, theta: f64, length_m: f64) {
        let (p0, p1) = self.ignition_endpoints(theta, length_m);
        let mut newly = Vec::new();
        for c in LineCells::new(p0, p1) {
            if let Some(i) = self.index(c) {
                self.ignite(i, self.step, &mut newly);
            }
        }
        self.burning.extend(newly);
        self.burning.sort_unstable();
        self.burning.dedup();
    }

    /// Indraft at `at` from every burning cell acting as a sink of strength
    /// `sink` times the cell area.
    pub fn fire_induced_wind(&self, at: Cell, sink: f64) -> Vec2 {
        fire_induced_wind_from(
            self.center_m(at),
            self.burning.iter().map(|&i| self.center_m(self.coords(i))),
            sink,
            self.config.cell_size_m,
            self.config.sink_cutoff_m,
        )
    }

    /// Background wind along +y plus the fire-induced indraft.
    pub fn spread_vector(&self, at: Cell, params: &SimParams) -> Vec2 {
        Vec2::new(0.0, params.wind_speed) + self.fire_induced_wind(at, params.pyro_potential)
    }

    /// Advances one time step: convective spread, diffusive spread, burn-out.
    pub fn step(&mut self, params: &SimParams) {
        let next = self.step + 1;
        let burn_steps = params.burn_steps(&self.config);
        let red = std::mem::take(&mut self.burning);
        let mut newly = Vec::new();

        let scale = self.config.dt_s / self.config.cell_size_m;
        let reach: Vec<Cell> = self.spread_targets(&red, params, scale);
        for (&i, &end) in red.iter().zip(&reach) {
            for c in LineCells::new(self.coords(i), end) {
                if let Some(j) = self.index(c) {
                    self.ignite(j, next, &mut newly);
                }
            }
        }

        if params.ignition_prob > 0.0 {
            let offsets = self.config.neighborhood.offsets();
            for &i in &red {
                let c = self.coords(i);
                for &(dx, dy) in offsets {
                    let Some(j) = self.index(Cell::new(c.x + dx, c.y + dy)) else {
                        continue;
                    };
                    if self.grid[j] == CellState::Green
                        && self.rng.random::<f64>() < params.ignition_prob
                    {
                        self.ignite(j, next, &mut newly);
                    }
                }
            }
        }

        let mut still = Vec::with_capacity(red.len() + newly.len());
        for i in red {
            let lit = self.ignition_step[i].expect("burning cell has an ignition step");
            if next - lit >= burn_steps {
                self.grid[i] = CellState::Black;
            } else {
                still.push(i);
            }
        }
        still.extend(newly);
        still.sort_unstable();
        self.burning = still;
        self.step = next;
    }

    /// Rounded endpoint of each burning cell's convective segment.
    fn spread_targets(&self, red: &[usize], params: &SimParams, scale: f64) -> Vec<Cell> {
        let h = self.config.cell_size_m;
        let centers: Vec<Vec2> = red.iter().map(|&i| self.center_m(self.coords(i))).collect();
        red.iter()
            .zip(&centers)
            .map(|(&i, &p)| {
                let c = self.coords(i);
                let u = if params.pyro_potential > 0.0 {
                    fire_induced_wind_from(
                        p,
                        centers.iter().copied(),
                        params.pyro_potential,
                        h,
                        self.config.sink_cutoff_m,
                    )
                } else {
                    Vec2::default()
                };
                let v = Vec2::new(u.x, u.y + params.wind_speed);
                Cell::new(
                    (c.x as f64 + v.x * scale).round() as i64,
                    (c.y as f64 + v.y * scale).round() as i64,
                )
            })
            .collect()
    }

    /// First arrival times on the interior, in seconds.
    pub fn arrival_map(&self) -> ArrivalMap {
        let b = self.config.buffer_cells();
        let n = self.config.interior_cells();
        let mut data = Vec::with_capacity(n * n);
        for row in b..b + n {
            for col in b..b + n {
                data.push(
                    self.ignition_step[row * self.side + col]
                        .map(|k| k as f64 * self.config.dt_s),
                );
            }
        }
        Raster::from_vec(n, n, data).expect("interior dimensions")
    }
}

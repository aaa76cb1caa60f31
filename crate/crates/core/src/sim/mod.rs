//! Raster fire-spread simulator.
//!
//! Cells are green (fuel), red (burning) or black (no fuel). Each step a
//! burning cell
//!
//! 1. ignites every green cell on the Bresenham segment along its spread
//!    vector (background wind plus the indraft of all burning cells) scaled by
//!    the time step,
//! 2. ignites each green neighbour with the diffusive ignition probability,
//! 3. burns out once it has been red for the burn time.
//!
//! The first arrival time of a cell is the step at which it turned red times
//! the step length.

mod line;
mod state;

pub use line::{rasterize_line, Cell, LineCells};
pub use state::{fire_induced_wind_from, CellState, SimState, Vec2};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ArrivalMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighborhood {
    Moore8,
    VonNeumann4,
}

impl Neighborhood {
    pub fn offsets(self) -> &'static [(i64, i64)] {
        // (dx, dy) in row-major order of the neighbour cells
        match self {
            Neighborhood::Moore8 => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
            Neighborhood::VonNeumann4 => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
        }
    }
}

impl std::str::FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "moore8" | "moore" | "8" => Ok(Neighborhood::Moore8),
            "vonneumann4" | "von-neumann" | "vonneumann" | "4" => Ok(Neighborhood::VonNeumann4),
            other => Err(Error::Config(format!("unknown neighborhood {other:?}"))),
        }
    }
}

impl std::fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Neighborhood::Moore8 => "moore8",
            Neighborhood::VonNeumann4 => "vonneumann4",
        })
    }
}

/// Domain geometry and time stepping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Side of the square domain.
    pub domain_size_m: u32,
    pub cell_size_m: f64,
    /// Width of the fuel break around the domain edge.
    pub buffer_m: u32,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub ignition_line_length_m: f64,
    pub neighborhood: Neighborhood,
    /// Burning cells farther than this do not contribute to the indraft.
    /// `None` sums over every burning cell.
    #[serde(default)]
    pub sink_cutoff_m: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            domain_size_m: 200,
            cell_size_m: 1.0,
            buffer_m: 20,
            dt_s: 3.0,
            horizon_s: 800.0,
            ignition_line_length_m: 80.0,
            neighborhood: Neighborhood::Moore8,
            sink_cutoff_m: None,
        }
    }
}

fn integral_ratio(num: f64, den: f64) -> Option<u64> {
    let q = num / den;
    let r = q.round();
    ((q - r).abs() <= 1e-9 * q.abs().max(1.0) && r >= 0.0).then_some(r as u64)
}

impl SimConfig {
    /// 64 m domain with an 8 m break (48 x 48 interior) run for 240 s.
    pub fn desk() -> Self {
        SimConfig {
            domain_size_m: 64,
            buffer_m: 8,
            horizon_s: 240.0,
            ignition_line_length_m: 24.0,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.domain_size_m == 0 || self.buffer_m == 0 {
            return bad("domain_size_m and buffer_m must be positive".into());
        }
        if 2 * self.buffer_m >= self.domain_size_m {
            return bad(format!(
                "buffer {} m leaves no interior in a {} m domain",
                self.buffer_m, self.domain_size_m
            ));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return bad("cell_size_m must be positive".into());
        }
        if integral_ratio(self.domain_size_m as f64, self.cell_size_m).is_none()
            || integral_ratio(self.buffer_m as f64, self.cell_size_m).is_none()
        {
            return bad("domain and buffer must be whole numbers of cells".into());
        }
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad("dt_s must be positive".into());
        }
        // 800 s over 3 s steps is not a whole number of steps; the run stops at
        // the last full step inside the horizon.
        if !(self.horizon_s.is_finite() && self.horizon_s >= self.dt_s) {
            return bad("horizon_s must cover at least one step".into());
        }
        if !(self.ignition_line_length_m.is_finite() && self.ignition_line_length_m >= 0.0) {
            return bad("ignition_line_length_m must be non-negative".into());
        }
        if let Some(r) = self.sink_cutoff_m {
            if !(r > 0.0) {
                return bad("sink_cutoff_m must be positive".into());
            }
        }
        Ok(())
    }

    /// Cells along one side of the whole domain.
    pub fn domain_cells(&self) -> usize {
        (self.domain_size_m as f64 / self.cell_size_m).round() as usize
    }

    pub fn buffer_cells(&self) -> usize {
        (self.buffer_m as f64 / self.cell_size_m).round() as usize
    }

    /// Cells along one side of the fuelled interior.
    pub fn interior_cells(&self) -> usize {
        self.domain_cells() - 2 * self.buffer_cells()
    }

    /// Whole steps that fit inside the horizon.
    pub fn total_steps(&self) -> u32 {
        let q = self.horizon_s / self.dt_s;
        (q + 1e-9 * q.max(1.0)).floor() as u32
    }
}

/// The five model parameters plus the seed of the stochastic terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Background wind speed, m/s.
    pub wind_speed: f64,
    /// Pyrogenic potential (sink strength), 1/s.
    pub pyro_potential: f64,
    /// Time a cell stays burning, s.
    pub burn_time_s: f64,
    /// Per-step probability that a burning cell ignites a green neighbour.
    pub ignition_prob: f64,
    /// Angle between the ignition line and the wind direction, radians.
    pub theta: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self, config: &SimConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Params(m));
        let all_finite = [
            self.wind_speed,
            self.pyro_potential,
            self.burn_time_s,
            self.ignition_prob,
            self.theta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("parameters must be finite".into());
        }
        if self.wind_speed < 0.0 || self.pyro_potential < 0.0 {
            return bad("wind_speed and pyro_potential must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.ignition_prob) {
            return bad(format!("ignition_prob {} outside [0, 1]", self.ignition_prob));
        }
        if !(0.0..=PI).contains(&self.theta) {
            return bad(format!("theta {} outside [0, pi]", self.theta));
        }
        match integral_ratio(self.burn_time_s, config.dt_s) {
            Some(n) if n >= 1 => Ok(()),
            _ => bad(format!(
                "burn_time_s {} is not a positive multiple of dt_s {}",
                self.burn_time_s, config.dt_s
            )),
        }
    }

    /// Steps a cell stays red. Assumes [`SimParams::validate`] passed.
    pub fn burn_steps(&self, config: &SimConfig) -> u32 {
        (self.burn_time_s / config.dt_s).round() as u32
    }
}

/// Simulates one fire from the ignition line up to the horizon and returns the
/// first arrival times on the interior raster.
pub fn run_simulation(params: &SimParams, config: &SimConfig) -> Result<ArrivalMap> {
    params.validate(config)?;
    let mut state = SimState::new(config, params.seed)?;
    state.ignite_line(params.theta, config.ignition_line_length_m);
    for _ in 0..config.total_steps() {
        state.step(params);
    }
    Ok(state.arrival_map())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(wind: f64, pyro: f64, prob: f64) -> SimParams {
        SimParams {
            wind_speed: wind,
            pyro_potential: pyro,
            burn_time_s: 15.0,
            ignition_prob: prob,
            theta: PI / 2.0,
            seed: 11,
        }
    }

    #[test]
    fn default_geometry() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.domain_cells(), 200);
        assert_eq!(c.interior_cells(), 160);
        assert_eq!(c.total_steps(), 266);
        let d = SimConfig::desk();
        d.validate().unwrap();
        assert_eq!(d.interior_cells(), 48);
    }

    #[test]
    fn rejects_degenerate_interior_and_bad_horizon() {
        let c = SimConfig {
            buffer_m: 100,
            ..SimConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = SimConfig {
            horizon_s: 2.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SimConfig {
            buffer_m: 0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn burn_time_must_be_multiple_of_step() {
        let c = SimConfig::default();
        let mut p = params(1.0, 0.5, 0.5);
        assert_eq!(p.burn_steps(&c), 5);
        p.burn_time_s = 10.0;
        assert!(p.validate(&c).is_err());
        p.burn_time_s = 0.0;
        assert!(p.validate(&c).is_err());
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        let c = SimConfig::default();
        for p in [
            SimParams { ignition_prob: 1.5, ..params(1.0, 0.5, 0.5) },
            SimParams { theta: 4.0, ..params(1.0, 0.5, 0.5) },
            SimParams { wind_speed: -1.0, ..params(1.0, 0.5, 0.5) },
            SimParams { pyro_potential: f64::NAN, ..params(1.0, 0.5, 0.5) },
        ] {
            assert!(matches!(p.validate(&c), Err(Error::Params(_))));
        }
    }

    #[test]
    fn no_spread_leaves_only_the_ignition_line() {
        let c = SimConfig::desk();
        let map = run_simulation(&params(0.0, 0.0, 0.0), &c).unwrap();
        let burnt: Vec<f64> = map.as_slice().iter().flatten().copied().collect();
        // 24 m line clipped to nothing: it lies fully inside the interior
        assert_eq!(burnt.len(), 25);
        assert!(burnt.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn arrival_times_are_multiples_of_dt_within_horizon() {
        let c = SimConfig::desk();
        let map = run_simulation(&params(4.0, 0.7, 0.5), &c).unwrap();
        for t in map.as_slice().iter().flatten() {
            assert!(*t >= 0.0 && *t <= c.horizon_s);
            assert_eq!((t / c.dt_s).fract(), 0.0);
        }
    }
}

//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use std::collections::VecDeque;

use emberlearn::sim::{Cell, CellState, SimState};
use emberlearn::{ArrivalMap, Neighborhood, SimConfig, SimParams};

/// Nearest cell to the ideal segment in every column of the major axis,
/// exact ties resolved toward `p1`. Evaluated on the 0.01-cell sample grid
/// along the major axis; samples at integral positions fix the cells.
pub fn line_oracle(p0: Cell, p1: Cell) -> Vec<Cell> {
    let (dx, dy) = (p1.x - p0.x, p1.y - p0.y);
    let x_major = dx.abs() >= dy.abs();
    let (major, minor) = if x_major { (dx, dy) } else { (dy, dx) };
    let m = major.abs();
    if m == 0 {
        return vec![p0];
    }
    let mut cells = Vec::new();
    for k in 0..=100 * m {
        if k % 100 != 0 {
            continue;
        }
        let i = k / 100;
        // offset along the minor axis is i*|minor|/m; round half toward p1
        let j = (2 * i * minor.abs() + m).div_euclid(2 * m);
        let (a, b) = (i * major.signum(), j * minor.signum());
        cells.push(if x_major {
            Cell::new(p0.x + a, p0.y + b)
        } else {
            Cell::new(p0.x + b, p0.y + a)
        });
    }
    cells
}

/// Multi-source breadth-first distances on an `n x n` grid.
pub fn bfs_distances(n: usize, sources: &[(usize, usize)], nb: Neighborhood) -> Vec<Option<u32>> {
    let mut dist = vec![None; n * n];
    let mut q = VecDeque::new();
    for &(r, c) in sources {
        dist[r * n + c] = Some(0);
        q.push_back((r, c));
    }
    while let Some((r, c)) = q.pop_front() {
        let d = dist[r * n + c].unwrap();
        for &(dx, dy) in nb.offsets() {
            let (rr, cc) = (r as i64 + dy, c as i64 + dx);
            if rr < 0 || cc < 0 || rr >= n as i64 || cc >= n as i64 {
                continue;
            }
            let j = rr as usize * n + cc as usize;
            if dist[j].is_none() {
                dist[j] = Some(d + 1);
                q.push_back((rr as usize, cc as usize));
            }
        }
    }
    dist
}

/// Runs a simulation step by step, checking after every step:
/// cell states only move Green -> Red -> Black, cells black at step 0 never
/// ignite, ignition steps are written once and never change, the burn scar
/// only grows, and a cell lit at step k is red for steps k..k+B-1 and black
/// from step k+B on. Returns the final arrival map.
pub fn run_checked(params: &SimParams, config: &SimConfig) -> Result<ArrivalMap, String> {
    let mut state = SimState::new(config, params.seed).map_err(|e| e.to_string())?;
    let initial_black: Vec<bool> = state.cells().iter().map(|&c| c == CellState::Black).collect();
    state.ignite_line(params.theta, config.ignition_line_length_m);
    let burn = params.burn_steps(config);
    let mut prev_cells = state.cells().to_vec();
    let mut prev_lit = state.ignition_steps().to_vec();
    check_state(&state, &initial_black, burn)?;
    for _ in 0..config.total_steps() {
        state.step(params);
        for (i, ((&a, &b), (&la, &lb))) in prev_cells
            .iter()
            .zip(state.cells())
            .zip(prev_lit.iter().zip(state.ignition_steps()))
            .enumerate()
        {
            let ok = matches!(
                (a, b),
                (CellState::Green, _) | (CellState::Red, CellState::Red | CellState::Black) | (CellState::Black, CellState::Black)
            );
            if !ok {
                return Err(format!("cell {i}: {a:?} -> {b:?} at step {}", state.step_index()));
            }
            if la.is_some() && la != lb {
                return Err(format!("cell {i}: ignition step rewritten {la:?} -> {lb:?}"));
            }
        }
        check_state(&state, &initial_black, burn)?;
        prev_cells = state.cells().to_vec();
        prev_lit = state.ignition_steps().to_vec();
    }
    Ok(state.arrival_map())
}

fn check_state(state: &SimState, initial_black: &[bool], burn: u32) -> Result<(), String> {
    let now = state.step_index();
    for (i, (&cell, &lit)) in state.cells().iter().zip(state.ignition_steps()).enumerate() {
        if initial_black[i] {
            if cell != CellState::Black || lit.is_some() {
                return Err(format!("buffer cell {i} is {cell:?} with ignition {lit:?}"));
            }
            continue;
        }
        match (cell, lit) {
            (CellState::Green, None) => {}
            (CellState::Red, Some(k)) if k <= now && now < k + burn => {}
            (CellState::Black, Some(k)) if now >= k + burn => {}
            _ => {
                return Err(format!(
                    "cell {i} is {cell:?} with ignition {lit:?} at step {now} (burn {burn})"
                ))
            }
        }
    }
    Ok(())
}

/// Chebyshev distance arrival for still air and certain ignition.
pub fn bfs_arrival(line: &ArrivalMap, nb: Neighborhood, dt: f64, steps: u32) -> Vec<Option<f64>> {
    let n = line.height();
    let sources: Vec<(usize, usize)> = (0..n * n)
        .filter(|&i| line.as_slice()[i] == Some(0.0))
        .map(|i| (i / n, i % n))
        .collect();
    bfs_distances(n, &sources, nb)
        .into_iter()
        .map(|d| d.filter(|&k| k <= steps).map(|k| k as f64 * dt))
        .collect()
}

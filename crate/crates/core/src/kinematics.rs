//! Target motion on the reflecting unit cube and quantization of locations
//! into grid cells.
//!
//! Slots are indexed from 0 internally: slot `j` covers the integer times
//! `start(j) + 1 ..= end(j)` and its cells live on a grid of `len(j) * M`
//! cells per axis.

use serde::{Deserialize, Serialize};

use crate::numeric::snapped_ceil;
use crate::{Error, Result};

/// Ending times of the velocity slots together with the dimension and the
/// speed limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSchedule {
    ending_times: Vec<u32>,
    dimension: usize,
    max_speed: f64,
}

impl SlotSchedule {
    pub fn new(ending_times: Vec<u32>, dimension: usize, max_speed: f64) -> Result<Self> {
        if ending_times.is_empty() {
            return Err(Error::config("schedule needs at least one slot"));
        }
        let mut prev = 0u32;
        for &n in &ending_times {
            if n <= prev {
                return Err(Error::config(format!(
                    "ending times must be strictly increasing positive integers, got {ending_times:?}"
                )));
            }
            prev = n;
        }
        if dimension == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(max_speed.is_finite() && max_speed >= 0.0) {
            return Err(Error::config(format!("max speed must be >= 0, got {max_speed}")));
        }
        Ok(Self {
            ending_times,
            dimension,
            max_speed,
        })
    }

    /// Single-slot schedule of length `n`.
    pub fn constant_velocity(n: u32, dimension: usize, max_speed: f64) -> Result<Self> {
        Self::new(vec![n], dimension, max_speed)
    }

    /// Ending times `round((j+1) n_B / (B+1))` for `j = 1..=B`.
    pub fn equal_split(horizon: u32, slots: usize, dimension: usize, max_speed: f64) -> Result<Self> {
        let b = slots as f64;
        let ends = (1..=slots)
            .map(|j| ((j as f64 + 1.0) * horizon as f64 / (b + 1.0)).round() as u32)
            .collect();
        Self::new(ends, dimension, max_speed)
    }

    pub fn ending_times(&self) -> &[u32] {
        &self.ending_times
    }

    pub fn num_slots(&self) -> usize {
        self.ending_times.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    /// `n_B`.
    pub fn horizon(&self) -> u32 {
        *self.ending_times.last().expect("nonempty")
    }

    /// `n_{j-1}` for 0-based slot `j` (0 for the first slot).
    pub fn start(&self, j: usize) -> u32 {
        if j == 0 {
            0
        } else {
            self.ending_times[j - 1]
        }
    }

    pub fn end(&self, j: usize) -> u32 {
        self.ending_times[j]
    }

    /// `N_j`.
    pub fn len(&self, j: usize) -> u32 {
        self.end(j) - self.start(j)
    }

    /// Slot containing time `t`; time 0 belongs to the first slot.
    pub fn slot_of(&self, t: u32) -> Option<usize> {
        if t > self.horizon() {
            return None;
        }
        Some(self.ending_times.iter().position(|&n| t <= n).unwrap_or(0))
    }

    /// Rejects speeds outside the range where the achievability bounds apply.
    pub fn check_bound_hypotheses(&self) -> Result<()> {
        if self.max_speed >= 0.5 {
            return Err(Error::config(format!(
                "max speed {} must be < 0.5 for bound evaluation",
                self.max_speed
            )));
        }
        Ok(())
    }
}

/// Initial location and per-slot velocities (`B x d`, row per slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub initial: Vec<f64>,
    pub velocities: Vec<Vec<f64>>,
}

impl TargetState {
    pub fn new(initial: Vec<f64>, velocities: Vec<Vec<f64>>) -> Self {
        Self { initial, velocities }
    }

    /// Checks shapes and ranges against a schedule.
    pub fn validate(&self, sched: &SlotSchedule) -> Result<()> {
        let d = sched.dimension();
        if self.initial.len() != d {
            return Err(Error::config(format!(
                "initial location has {} coordinates, expected {d}",
                self.initial.len()
            )));
        }
        if self.initial.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::config("initial location must lie in [0,1]^d"));
        }
        if self.velocities.len() != sched.num_slots() {
            return Err(Error::config(format!(
                "state has {} velocity rows, schedule has {} slots",
                self.velocities.len(),
                sched.num_slots()
            )));
        }
        let vp = sched.max_speed();
        for row in &self.velocities {
            if row.len() != d {
                return Err(Error::config("velocity row has wrong dimension"));
            }
            if row.iter().any(|v| !(v.abs() <= vp)) {
                return Err(Error::config(format!("velocity exceeds max speed {vp}")));
            }
        }
        Ok(())
    }
}

/// Folds an unreflected coordinate back into `[0,1]`.
#[inline]
pub fn reflect(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        return u;
    }
    if (1.0..=2.0).contains(&u) {
        return 2.0 - u;
    }
    if (-1.0..0.0).contains(&u) {
        return -u;
    }
    let m = u.rem_euclid(2.0);
    if m <= 1.0 {
        m
    } else {
        2.0 - m
    }
}

/// Location at time `t` of a target starting at `s` with velocity `v`,
/// reflected off the walls of `[0,1]`.
#[inline]
pub fn locate(s: f64, v: f64, t: u32) -> f64 {
    reflect(s + t as f64 * v)
}

/// Direction of travel (`v` or `-v`) after `t` steps of the reflected flow.
pub fn heading(s: f64, v: f64, t: u32) -> f64 {
    let m = (s + t as f64 * v).rem_euclid(2.0);
    if m < 1.0 {
        v
    } else {
        -v
    }
}

/// Location vector at time `t` under the piecewise constant velocity model.
/// Each slot restarts from the location reached at the end of the previous
/// slot with its own velocity.
pub fn locate_piecewise(state: &TargetState, sched: &SlotSchedule, t: u32) -> Result<Vec<f64>> {
    let horizon = sched.horizon();
    if t > horizon {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    let mut pos = state.initial.clone();
    for j in 0..sched.num_slots() {
        let start = sched.start(j);
        let v = &state.velocities[j];
        if t <= sched.end(j) {
            return Ok(pos.iter().zip(v).map(|(&x, &vi)| locate(x, vi, t - start)).collect());
        }
        let len = sched.len(j);
        for (x, &vi) in pos.iter_mut().zip(v) {
            *x = locate(*x, vi, len);
        }
    }
    unreachable!("t <= horizon is covered by the last slot")
}

/// Cell index `ceil(x n M)` in `1..=nM`; `x = 0` maps to cell 1.
#[inline]
pub fn quantize_cell(x: f64, n: u32, m: u32) -> u32 {
    let cells = n as u64 * m as u64;
    let k = snapped_ceil(x * cells as f64);
    (k.max(1.0) as u64).min(cells) as u32
}

/// Time-major matrix of cell indices for one slot (`len` rows of `dim`
/// entries). Ordering is lexicographic on the cell sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellMatrix {
    pub cells: Vec<u32>,
    pub dim: usize,
}

impl CellMatrix {
    pub fn new(cells: Vec<u32>, dim: usize) -> Self {
        debug_assert!(dim > 0 && cells.len().is_multiple_of(dim));
        Self { cells, dim }
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.cells.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell tuple at the `i`-th time point of the slot.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.cells[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of time points at which both matrices select the same cell.
    pub fn coincidences(&self, other: &CellMatrix) -> usize {
        (0..self.len()).filter(|&i| self.row(i) == other.row(i)).count()
    }
}

/// Quantized trajectory of a target: one cell matrix per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTrajectory {
    pub grid_m: u32,
    pub slots: Vec<CellMatrix>,
}

/// Cells visited during slot `j` (grid `N_j M`).
pub fn slot_cells(state: &TargetState, sched: &SlotSchedule, j: usize, m: u32) -> Result<CellMatrix> {
    let n = sched.len(j);
    let d = sched.dimension();
    let mut cells = Vec::with_capacity(n as usize * d);
    for t in sched.start(j) + 1..=sched.end(j) {
        let pos = locate_piecewise(state, sched, t)?;
        cells.extend(pos.iter().map(|&x| quantize_cell(x, n, m)));
    }
    Ok(CellMatrix::new(cells, d))
}

pub fn quantized_trajectory(state: &TargetState, sched: &SlotSchedule, m: u32) -> Result<QuantizedTrajectory> {
    if m == 0 {
        return Err(Error::config("grid parameter M must be positive"));
    }
    state.validate(sched)?;
    let slots = (0..sched.num_slots())
        .map(|j| slot_cells(state, sched, j, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedTrajectory { grid_m: m, slots })
}

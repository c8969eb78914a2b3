//! Random query codebooks. Slot `j` owns one binary codeword of length `N_j`
//! per cell of the grid `[N_j M]^d`; the query at time `t` is the union of
//! the cells whose codeword has a one at `t`.
//!
//! Bits come from a counter-based hash keyed by `(seed, slot, cell, t)`, so
//! every bit is addressable on its own and codebooks are identical however
//! the work is split across threads.

use crate::kinematics::{locate_piecewise, quantize_cell, CellMatrix, SlotSchedule, TargetState};
use crate::numeric::{derive_key, unit_from_key};
use crate::{Error, Result};

/// Slots with at most this many bits are stored as bitsets.
const MATERIALIZE_LIMIT: u64 = 1 << 28;

#[derive(Debug, Clone)]
struct SlotBook {
    start: u32,
    len: u32,
    cells_per_axis: u64,
    num_cells: u64,
    /// Row-major `[k][cell]` bitset, present when small enough.
    bits: Option<Vec<u64>>,
    measures: Vec<f64>,
}

/// Codewords of every slot, generated i.i.d. Bernoulli(`p`).
#[derive(Debug, Clone)]
pub struct QueryCodebook {
    seed: u64,
    p: f64,
    dim: usize,
    grid_m: u32,
    slots: Vec<SlotBook>,
}

#[inline]
fn hashed_bit(seed: u64, slot: usize, cell: u64, t: u32, p: f64) -> bool {
    let key = derive_key(derive_key(derive_key(seed, slot as u64), cell), t as u64);
    unit_from_key(key) < p
}

/// Builds the codebook for a schedule, grid parameter `M`, bias `p` and seed.
pub fn generate_codebook(sched: &SlotSchedule, m: u32, p: f64, seed: u64) -> Result<QueryCodebook> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("codebook bias p = {p} outside [0,1]")));
    }
    if m == 0 {
        return Err(Error::config("grid parameter M must be positive"));
    }
    let d = sched.dimension();
    let mut slots = Vec::with_capacity(sched.num_slots());
    for j in 0..sched.num_slots() {
        let len = sched.len(j);
        let start = sched.start(j);
        let axis = len as u64 * m as u64;
        let num_cells = axis
            .checked_pow(d as u32)
            .ok_or_else(|| Error::config("query grid too large"))?;
        let total_bits = num_cells.saturating_mul(len as u64);
        let mut measures = Vec::with_capacity(len as usize);
        let bits = if total_bits <= MATERIALIZE_LIMIT {
            let words_per_row = num_cells.div_ceil(64) as usize;
            let mut bits = vec![0u64; words_per_row * len as usize];
            for k in 0..len {
                let row = &mut bits[k as usize * words_per_row..(k as usize + 1) * words_per_row];
                let mut ones = 0u64;
                for c in 0..num_cells {
                    if hashed_bit(seed, j, c, start + 1 + k, p) {
                        row[(c / 64) as usize] |= 1 << (c % 64);
                        ones += 1;
                    }
                }
                measures.push(ones as f64 / num_cells as f64);
            }
            Some(bits)
        } else {
            for k in 0..len {
                let ones = (0..num_cells)
                    .filter(|&c| hashed_bit(seed, j, c, start + 1 + k, p))
                    .count();
                measures.push(ones as f64 / num_cells as f64);
            }
            None
        };
        slots.push(SlotBook {
            start,
            len,
            cells_per_axis: axis,
            num_cells,
            bits,
            measures,
        });
    }
    Ok(QueryCodebook {
        seed,
        p,
        dim: d,
        grid_m: m,
        slots,
    })
}

impl QueryCodebook {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bias(&self) -> f64 {
        self.p
    }

    pub fn grid_m(&self) -> u32 {
        self.grid_m
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Number of cells `(N_j M)^d` of slot `j`.
    pub fn num_cells(&self, j: usize) -> u64 {
        self.slots[j].num_cells
    }

    /// Linear index of a cell tuple with 1-based coordinates.
    #[inline]
    fn linear(&self, j: usize, cell: &[u32]) -> u64 {
        let axis = self.slots[j].cells_per_axis;
        let mut idx = 0u64;
        for &c in cell.iter().rev() {
            debug_assert!(c >= 1 && (c as u64) <= axis);
            idx = idx * axis + (c as u64 - 1);
        }
        idx
    }

    /// Codeword bit of `cell` at the `k`-th time point of slot `j`.
    #[inline]
    pub fn bit(&self, j: usize, k: usize, cell: &[u32]) -> bool {
        debug_assert_eq!(cell.len(), self.dim);
        let book = &self.slots[j];
        let c = self.linear(j, cell);
        match &book.bits {
            Some(bits) => {
                let words = book.num_cells.div_ceil(64) as usize;
                bits[k * words + (c / 64) as usize] >> (c % 64) & 1 == 1
            }
            None => hashed_bit(self.seed, j, c, book.start + 1 + k as u32, self.p),
        }
    }

    /// Codeword bits along a slot trajectory.
    pub fn codeword(&self, j: usize, w: &CellMatrix) -> Vec<bool> {
        (0..w.len()).map(|k| self.bit(j, k, w.row(k))).collect()
    }

    /// `|A_t|` for the `k`-th query of slot `j`.
    pub fn query_measure(&self, j: usize, k: usize) -> f64 {
        self.slots[j].measures[k]
    }

    /// Query measures of slot `j` in time order.
    pub fn measures(&self, j: usize) -> &[f64] {
        &self.slots[j].measures
    }

    /// Whether every query measure of slot `j` is within `eta` of `p`.
    pub fn is_typical(&self, j: usize, p: f64, eta: f64) -> bool {
        self.slots[j].measures.iter().all(|q| (q - p).abs() <= eta)
    }

    /// Slot and in-slot index of time `t >= 1`.
    pub fn locate_time(&self, t: u32) -> Option<(usize, usize)> {
        self.slots
            .iter()
            .position(|b| t > b.start && t <= b.start + b.len)
            .map(|j| (j, (t - self.slots[j].start - 1) as usize))
    }
}

/// Noiseless answer `X_t`: the codeword bit of the cell holding the target.
pub fn answer_query(cb: &QueryCodebook, state: &TargetState, sched: &SlotSchedule, t: u32) -> Result<bool> {
    let (j, k) = cb.locate_time(t).ok_or(Error::TimeOutOfRange {
        t,
        horizon: sched.horizon(),
    })?;
    let pos = locate_piecewise(state, sched, t)?;
    let n = sched.len(j);
    let cell: Vec<u32> = pos.iter().map(|&x| quantize_cell(x, n, cb.grid_m)).collect();
    Ok(cb.bit(j, k, &cell))
}

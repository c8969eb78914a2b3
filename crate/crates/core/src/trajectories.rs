//! Enumeration of quantized trajectory sets, the success neighbourhoods `D`,
//! confusable sets `U_l` and the pairwise intersection check.
//!
//! Sets are enumerated by sweeping a uniform grid of starting locations and
//! velocities and deduplicating the resulting cell matrices. Each coordinate
//! moves independently, so a `d`-dimensional set is the Cartesian product of
//! one-dimensional sets. Later slots fix the start, and their velocity sweep
//! also visits every velocity at which a cell boundary is hit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kinematics::{locate, quantize_cell, CellMatrix, SlotSchedule};
use crate::numeric::{grid_points, snapped_ceil};
use crate::{Error, Result};

/// Default number of grid points per cell width of the sweep.
pub const DEFAULT_RESOLUTION_FACTOR: u32 = 4;
/// Default limit on the size bound of any enumerated set.
pub const DEFAULT_CAP: f64 = 1e7;

/// Whether a set describes the first slot (location and velocity unknown)
/// or a later slot (location fixed by earlier estimates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    First,
    Later,
}

/// A pair reproducing an entry: starting location of the slot and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

/// Deduplicated cell matrices of one slot, sorted lexicographically, each
/// with the first witness met by the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub kind: SlotKind,
    pub slot_len: u32,
    pub grid_m: u32,
    pub dim: usize,
    pub entries: Vec<CellMatrix>,
    pub witnesses: Vec<Witness>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of an entry, if present.
    pub fn position(&self, cells: &CellMatrix) -> Option<usize> {
        self.entries.binary_search(cells).ok()
    }

    /// Cell matrix produced by a witness on this set's grid.
    pub fn cells_of(&self, w: &Witness) -> CellMatrix {
        trajectory_cells(&w.s, &w.v, self.slot_len, self.grid_m)
    }
}

/// Cells visited at times `1..=n` from `s` with velocity `v` on the grid
/// `n M`, time-major.
pub fn trajectory_cells(s: &[f64], v: &[f64], n: u32, m: u32) -> CellMatrix {
    let d = s.len();
    let mut cells = Vec::with_capacity(n as usize * d);
    for t in 1..=n {
        for i in 0..d {
            cells.push(quantize_cell(locate(s[i], v[i], t), n, m));
        }
    }
    CellMatrix::new(cells, d)
}

/// Size bound `(2(n v_+ + 3) n^4 M^2)^d` for first-slot sets.
pub fn first_slot_size_bound(n: u32, m: u32, v_plus: f64, d: usize) -> f64 {
    let n = n as f64;
    let m = m as f64;
    (2.0 * (n * v_plus + 3.0) * n.powi(4) * m * m).powi(d as i32)
}

/// Size bound `((2 N v_+ + 3) N^3 M)^d` for later-slot sets.
pub fn later_slot_size_bound(n: u32, m: u32, v_plus: f64, d: usize) -> f64 {
    let n = n as f64;
    ((2.0 * n * v_plus + 3.0) * n.powi(3) * m as f64).powi(d as i32)
}

fn check_cap(bound: f64, cap: f64) -> Result<()> {
    if bound > cap {
        return Err(Error::CapExceeded { bound, cap });
    }
    Ok(())
}

fn sweep_step(n: u32, m: u32, resolution_factor: u32) -> f64 {
    1.0 / (resolution_factor as f64 * (n as f64).powi(2) * m as f64)
}

fn velocity_grid(v_plus: f64, step: f64) -> Vec<f64> {
    if v_plus == 0.0 {
        vec![0.0]
    } else {
        grid_points(-v_plus, v_plus, step)
    }
}

/// Adds to `grid` every velocity at which the path from `x` hits a cell
/// boundary at some step, plus the midpoints between consecutive velocities.
/// With the start fixed the cell sequence is constant between breakpoints, so
/// the result visits every sequence.
fn with_breakpoints(grid: &[f64], x: f64, v_plus: f64, n: u32, m: u32) -> Vec<f64> {
    if v_plus == 0.0 {
        return grid.to_vec();
    }
    let cells = n * m;
    let mut vs: Vec<f64> = grid.to_vec();
    for t in 1..=n {
        let tf = t as f64;
        let k_lo = ((x - v_plus * tf - 1.0) / 2.0).floor() as i64;
        let k_hi = ((x + v_plus * tf + 1.0) / 2.0).ceil() as i64;
        for c in 0..=cells {
            let b = c as f64 / cells as f64;
            for k in k_lo..=k_hi {
                for target in [2.0 * k as f64 + b, 2.0 * k as f64 - b] {
                    let v = (target - x) / tf;
                    if v.abs() <= v_plus {
                        vs.push(v);
                    }
                }
            }
        }
    }
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let mids: Vec<f64> = vs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    vs.extend(mids);
    vs.sort_by(f64::total_cmp);
    vs
}

/// One-dimensional entries as `(cells, s, v)` in lexicographic order.
type Entries1d = Vec<(Vec<u32>, f64, f64)>;

/// Sweeps every `(s, v)` pair of the grids; velocity lines run in parallel
/// and are merged in grid order so the first witness is deterministic.
fn sweep_1d(starts: &[f64], velocities: &[f64], n: u32, m: u32) -> Entries1d {
    let lines: Vec<Vec<(Vec<u32>, f64)>> = velocities
        .par_iter()
        .map(|&v| {
            let mut out: Vec<(Vec<u32>, f64)> = Vec::new();
            for &s in starts {
                let cells: Vec<u32> = (1..=n).map(|t| quantize_cell(locate(s, v, t), n, m)).collect();
                if out.last().is_some_and(|(prev, _)| *prev == cells) {
                    continue;
                }
                out.push((cells, s));
            }
            out
        })
        .collect();
    let mut merged: BTreeMap<Vec<u32>, (f64, f64)> = BTreeMap::new();
    for (line, &v) in lines.into_iter().zip(velocities) {
        for (cells, s) in line {
            merged.entry(cells).or_insert((s, v));
        }
    }
    merged.into_iter().map(|(c, (s, v))| (c, s, v)).collect()
}

/// Cartesian product of per-axis sets, interleaved time-major and sorted.
fn product(kind: SlotKind, n: u32, m: u32, axes: &[Entries1d]) -> TrajectorySet {
    let d = axes.len();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut pairs: Vec<(CellMatrix, Witness)> = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    if total > 0 {
        'outer: loop {
            let mut cells = Vec::with_capacity(n as usize * d);
            for t in 0..n as usize {
                for i in 0..d {
                    cells.push(axes[i][idx[i]].0[t]);
                }
            }
            let s = (0..d).map(|i| axes[i][idx[i]].1).collect();
            let v = (0..d).map(|i| axes[i][idx[i]].2).collect();
            pairs.push((CellMatrix::new(cells, d), Witness { s, v }));
            // Odometer with the last axis fastest.
            let mut k = d;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
    if d > 1 {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let (entries, witnesses) = pairs.into_iter().unzip();
    TrajectorySet {
        kind,
        slot_len: n,
        grid_m: m,
        dim: d,
        entries,
        witnesses,
    }
}

/// All distinct first-slot quantized trajectories of length `n_1`.
pub fn enumerate_first_slot(sched: &SlotSchedule, m: u32, resolution_factor: u32, cap: f64) -> Result<TrajectorySet> {
    if m == 0 || resolution_factor == 0 {
        return Err(Error::config("M and the resolution factor must be positive"));
    }
    let n = sched.len(0);
    let d = sched.dimension();
    let v_plus = sched.max_speed();
    check_cap(first_slot_size_bound(n, m, v_plus, d), cap)?;
    let step = sweep_step(n, m, resolution_factor);
    let axis = sweep_1d(&grid_points(0.0, 1.0, step), &velocity_grid(v_plus, step), n, m);
    let axes = vec![axis; d];
    Ok(product(SlotKind::First, n, m, &axes))
}

/// All distinct quantized trajectories of slot `j` (0-based, `j >= 1`) from
/// the fixed slot-start location `start`, sweeping only the velocity.
pub fn enumerate_later_slot(
    start: &[f64],
    sched: &SlotSchedule,
    j: usize,
    m: u32,
    resolution_factor: u32,
    cap: f64,
) -> Result<TrajectorySet> {
    if j == 0 || j >= sched.num_slots() {
        return Err(Error::config(format!(
            "later-slot index {j} outside 1..{}",
            sched.num_slots()
        )));
    }
    if m == 0 || resolution_factor == 0 {
        return Err(Error::config("M and the resolution factor must be positive"));
    }
    let d = sched.dimension();
    if start.len() != d {
        return Err(Error::config("slot start location has the wrong dimension"));
    }
    let n = sched.len(j);
    let v_plus = sched.max_speed();
    check_cap(later_slot_size_bound(n, m, v_plus, d), cap)?;
    let step = sweep_step(n, m, resolution_factor);
    let grid = velocity_grid(v_plus, step);
    let axes: Vec<Entries1d> = start
        .iter()
        .map(|&x| sweep_1d(&[x], &with_breakpoints(&grid, x, v_plus, n, m), n, m))
        .collect();
    Ok(product(SlotKind::Later, n, m, &axes))
}

/// Velocity neighbourhood: `max_i |v_i - vbar_i| <= 1/(n M)`.
pub fn in_velocity_neighborhood(v: &[f64], vbar: &[f64], n: u32, m: u32) -> bool {
    let r = 1.0 / (n as f64 * m as f64);
    v.iter().zip(vbar).all(|(a, b)| (a - b).abs() <= r)
}

/// Location-velocity neighbourhood: velocity condition plus
/// `max_i |s_i - sbar_i| <= 1/M`.
pub fn in_neighborhood(s: &[f64], v: &[f64], sbar: &[f64], vbar: &[f64], n: u32, m: u32) -> bool {
    let r = 1.0 / m as f64;
    in_velocity_neighborhood(v, vbar, n, m) && s.iter().zip(sbar).all(|(a, b)| (a - b).abs() <= r)
}

/// Entries of a set that a decoder may confuse with the truth, grouped by
/// the number of time points `l` at which they share the true cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusablePartition {
    pub truth: CellMatrix,
    /// `l -> indices into the set`, including `l = 0`.
    pub classes: BTreeMap<usize, Vec<usize>>,
}

impl ConfusablePartition {
    pub fn total(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn max_coincidences(&self) -> Option<usize> {
        self.classes.keys().next_back().copied()
    }
}

fn witness_is_close(set: &TrajectorySet, truth: &Witness, w: &Witness) -> bool {
    match set.kind {
        SlotKind::First => in_neighborhood(&truth.s, &truth.v, &w.s, &w.v, set.slot_len, set.grid_m),
        SlotKind::Later => in_velocity_neighborhood(&truth.v, &w.v, set.slot_len, set.grid_m),
    }
}

/// Partitions the entries whose witness lies outside the neighbourhood of
/// the truth by their coincidence count with the true trajectory.
pub fn confusable_sets(truth: &Witness, set: &TrajectorySet) -> ConfusablePartition {
    let truth_cells = set.cells_of(truth);
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (entry, w)) in set.entries.iter().zip(&set.witnesses).enumerate() {
        if witness_is_close(set, truth, w) {
            continue;
        }
        classes.entry(entry.coincidences(&truth_cells)).or_default().push(i);
    }
    ConfusablePartition {
        truth: truth_cells,
        classes,
    }
}

/// `ceil(2 n v_+)`, the claimed limit on coincidences of confusable pairs.
pub fn intersection_limit(n: u32, v_plus: f64) -> usize {
    snapped_ceil(2.0 * n as f64 * v_plus) as usize
}

/// A pair of set entries exceeding the coincidence limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionViolation {
    pub truth: Witness,
    pub other: Witness,
    pub coincidences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub limit: usize,
    pub pairs_checked: usize,
    pub max_coincidences: usize,
    pub violations: usize,
    /// The first violating pair in set order.
    pub example: Option<IntersectionViolation>,
}

impl IntersectionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Counts coincidences for every pair (truth witness, confusable entry).
pub fn verify_intersection_bound(set: &TrajectorySet, v_plus: f64) -> IntersectionReport {
    let all: Vec<usize> = (0..set.len()).collect();
    verify_intersection_bound_for(set, v_plus, &all)
}

/// As [`verify_intersection_bound`], restricted to the truth entries with
/// the given indices.
pub fn verify_intersection_bound_for(set: &TrajectorySet, v_plus: f64, truths: &[usize]) -> IntersectionReport {
    let limit = intersection_limit(set.slot_len, v_plus);
    let per_truth: Vec<(usize, usize, usize, Option<IntersectionViolation>)> = truths
        .par_iter()
        .map(|&ti| {
            let truth = &set.witnesses[ti];
            let truth_cells = &set.entries[ti];
            let (mut pairs, mut max, mut bad) = (0usize, 0usize, 0usize);
            let mut example = None;
            for (entry, w) in set.entries.iter().zip(&set.witnesses) {
                if witness_is_close(set, truth, w) {
                    continue;
                }
                pairs += 1;
                let c = entry.coincidences(truth_cells);
                max = max.max(c);
                if c > limit {
                    bad += 1;
                    if example.is_none() {
                        example = Some(IntersectionViolation {
                            truth: truth.clone(),
                            other: w.clone(),
                            coincidences: c,
                        });
                    }
                }
            }
            (pairs, max, bad, example)
        })
        .collect();
    let mut report = IntersectionReport {
        limit,
        pairs_checked: 0,
        max_coincidences: 0,
        violations: 0,
        example: None,
    };
    for (pairs, max, bad, example) in per_truth {
        report.pairs_checked += pairs;
        report.max_coincidences = report.max_coincidences.max(max);
        report.violations += bad;
        if report.example.is_none() {
            report.example = example;
        }
    }
    report
}

/// True when doubling the resolution factor adds no first-slot entries.
pub fn refinement_is_stable(sched: &SlotSchedule, m: u32, resolution_factor: u32, cap: f64) -> Result<bool> {
    let base = enumerate_first_slot(sched, m, resolution_factor, cap)?;
    let fine = enumerate_first_slot(sched, m, 2 * resolution_factor, cap)?;
    Ok(base.entries == fine.entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(n: u32, d: usize, v_plus: f64) -> SlotSchedule {
        SlotSchedule::constant_velocity(n, d, v_plus).unwrap()
    }

    #[test]
    fn stationary_set_is_constant_sequences() {
        let set = enumerate_first_slot(&sched(3, 1, 0.0), 2, 4, DEFAULT_CAP).unwrap();
        assert_eq!(set.len(), 6);
        for (k, e) in set.entries.iter().enumerate() {
            assert_eq!(e.cells, vec![k as u32 + 1; 3]);
        }
    }

    #[test]
    fn small_set_respects_size_bound() {
        let set = enumerate_first_slot(&sched(2, 1, 0.25), 1, 4, DEFAULT_CAP).unwrap();
        assert!(set.len() as f64 <= 112.0);
        assert_eq!(first_slot_size_bound(2, 1, 0.25, 1), 112.0);
    }

    #[test]
    fn witnesses_reproduce_entries() {
        let set = enumerate_first_slot(&sched(4, 1, 0.25), 3, 4, DEFAULT_CAP).unwrap();
        for (e, w) in set.entries.iter().zip(&set.witnesses) {
            assert_eq!(&set.cells_of(w), e);
        }
        assert!(set.entries.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn two_dimensional_set_is_a_product() {
        let one = enumerate_first_slot(&sched(3, 1, 0.1), 2, 4, DEFAULT_CAP).unwrap();
        let two = enumerate_first_slot(&sched(3, 2, 0.1), 2, 4, DEFAULT_CAP).unwrap();
        assert_eq!(two.len(), one.len() * one.len());
        assert!(two.entries.windows(2).all(|p| p[0] < p[1]));
        for (e, w) in two.entries.iter().zip(&two.witnesses).step_by(7) {
            assert_eq!(&two.cells_of(w), e);
        }
    }

    #[test]
    fn later_slot_basics() {
        let sch = SlotSchedule::new(vec![3, 6], 1, 0.0).unwrap();
        let set = enumerate_later_slot(&[0.4], &sch, 1, 2, 4, DEFAULT_CAP).unwrap();
        assert_eq!(set.len(), 1);
        assert!(enumerate_later_slot(&[0.4], &sch, 0, 2, 4, DEFAULT_CAP).is_err());
        let moving = SlotSchedule::new(vec![3, 6], 1, 0.2).unwrap();
        let set = enumerate_later_slot(&[0.4], &moving, 1, 2, 4, DEFAULT_CAP).unwrap();
        assert!(set.len() as f64 <= later_slot_size_bound(3, 2, 0.2, 1));
        assert!(set.witnesses.iter().all(|w| w.s == vec![0.4]));
    }

    #[test]
    fn cap_is_enforced() {
        let err = enumerate_first_slot(&sched(20, 1, 0.1), 8, 4, 1e5).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn neighborhoods() {
        assert!(in_velocity_neighborhood(&[0.1], &[0.1], 4, 2));
        assert!(in_velocity_neighborhood(&[0.0], &[0.125], 4, 2));
        assert!(!in_velocity_neighborhood(&[0.0], &[0.13], 4, 2));
        assert!(in_neighborhood(&[0.2], &[0.0], &[0.7], &[0.0], 4, 2));
        assert!(!in_neighborhood(&[0.2], &[0.0], &[0.71], &[0.0], 4, 2));
    }

    #[test]
    fn stationary_confusable_classes() {
        let set = enumerate_first_slot(&sched(4, 1, 0.0), 2, 4, DEFAULT_CAP).unwrap();
        let truth = Witness {
            s: vec![0.05],
            v: vec![0.0],
        };
        let part = confusable_sets(&truth, &set);
        // Entries with witness farther than 1/M are all disjoint from the truth.
        assert_eq!(part.classes.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert!(part.total() <= set.len());
    }

    #[test]
    fn antipodal_parallel_trajectories_do_not_meet() {
        let n = 10;
        let a = trajectory_cells(&[0.1], &[0.01], n, 2);
        let b = trajectory_cells(&[0.6], &[0.01], n, 2);
        assert_eq!(a.coincidences(&b), 0);
    }

    #[test]
    fn crossing_pair_meets_at_most_twice() {
        let n = 10;
        let (v_plus, m) = (0.1, 2);
        let mut worst = 0;
        for i in 0..=20 {
            for k in 0..=20 {
                let a = trajectory_cells(&[i as f64 / 20.0], &[v_plus], n, m);
                let b = trajectory_cells(&[k as f64 / 20.0], &[-v_plus], n, m);
                if a.cells.iter().zip(&b.cells).any(|(x, y)| x != y) {
                    worst = worst.max(a.coincidences(&b));
                }
            }
        }
        assert!(worst <= intersection_limit(n, v_plus));
    }
}

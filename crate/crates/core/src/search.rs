//! The non-adaptive query procedure: per-slot random queries, maximal
//! information density (or nearest neighbour) decoding over the candidate
//! trajectory set, and evaluation of the trajectory error.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::infodensity::log_output_marginal;
use crate::kinematics::{locate, locate_piecewise, quantized_trajectory, SlotSchedule, TargetState};
use crate::numeric::derive_key;
use crate::querying::{generate_codebook, QueryCodebook};
use crate::trajectories::{
    enumerate_first_slot, enumerate_later_slot, in_neighborhood, in_velocity_neighborhood, TrajectorySet, DEFAULT_CAP,
    DEFAULT_RESOLUTION_FACTOR,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeRule {
    #[default]
    MaxInfoDensity,
    NearestNeighbor,
}

/// Winner of a decoding pass. `score` is to be maximised for the
/// information density rule and minimised for nearest neighbour; `margin`
/// is the gap to the runner-up in the favourable direction (0 on ties and
/// for single-candidate sets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub index: usize,
    pub score: f64,
    pub margin: f64,
}

/// Picks the best score; ties go to the lowest index.
fn select<I: Iterator<Item = f64>>(scores: I, maximize: bool) -> Result<Decoded> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::NAN;
    for (i, s) in scores.enumerate() {
        let key = if maximize { s } else { -s };
        match best {
            None => best = Some((i, key)),
            Some((_, b)) if key > b => {
                second = b;
                best = Some((i, key));
            }
            Some(_) => {
                if second.is_nan() || key > second {
                    second = key;
                }
            }
        }
    }
    let (index, key) = best.ok_or(Error::EmptyCandidates)?;
    let margin = if second.is_nan() { 0.0 } else { key - second };
    Ok(Decoded {
        index,
        score: if maximize { key } else { -key },
        margin,
    })
}

/// Maximal information density decoding of slot `j` with the density
/// `iota_{p,f(p)}`.
pub fn mi_decode(
    ch: &ChannelModel,
    p: f64,
    candidates: &TrajectorySet,
    cb: &QueryCodebook,
    j: usize,
    ys: &[f64],
) -> Result<Decoded> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let u = ch.state(p);
    let n = ys.len();
    match ch {
        ChannelModel::Bsc { .. } => {
            // The density depends on the codeword only through the number of
            // disagreements D, so scoring from the integer D keeps ties exact.
            let eps = ch.noise_at_state(u);
            let marginal: f64 = ys.iter().map(|&y| log_output_marginal(ch, p, u, y)).sum();
            let (le, lc) = (eps.ln(), (1.0 - eps).ln());
            select(
                candidates.entries.iter().map(|w| {
                    let d = (0..n)
                        .filter(|&k| (cb.bit(j, k, w.row(k)) as u8 as f64) != ys[k])
                        .count();
                    d as f64 * le + (n - d) as f64 * lc - marginal
                }),
                true,
            )
        }
        ChannelModel::Awgn { .. } => {
            let table: Vec<[f64; 2]> = ys
                .iter()
                .map(|&y| {
                    let m = log_output_marginal(ch, p, u, y);
                    [
                        ch.log_transition_at_state(u, false, y) - m,
                        ch.log_transition_at_state(u, true, y) - m,
                    ]
                })
                .collect();
            select(
                candidates
                    .entries
                    .iter()
                    .map(|w| (0..n).map(|k| table[k][cb.bit(j, k, w.row(k)) as usize]).sum()),
                true,
            )
        }
    }
}

/// Nearest neighbour decoding: smallest squared distance between the
/// candidate codeword and the responses.
pub fn nn_decode(candidates: &TrajectorySet, cb: &QueryCodebook, j: usize, ys: &[f64]) -> Result<Decoded> {
    select(
        candidates.entries.iter().map(|w| {
            (0..ys.len())
                .map(|k| {
                    let x = cb.bit(j, k, w.row(k)) as u8 as f64;
                    (ys[k] - x) * (ys[k] - x)
                })
                .sum()
        }),
        false,
    )
}

/// Per-slot decoding record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecode {
    pub candidates: usize,
    pub winner: usize,
    pub score: f64,
    pub margin: f64,
    /// Whether the winner's witness lies in the success neighbourhood of
    /// the truth.
    pub in_neighborhood: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub estimate: TargetState,
    /// L-infinity error at every time `0..=n_B`.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub resolution: f64,
    pub excess: bool,
    pub slots: Vec<SlotDecode>,
}

/// Target resolution `(B + 1) / M`.
pub fn target_resolution(sched: &SlotSchedule, m: u32) -> f64 {
    (sched.num_slots() as f64 + 1.0) / m as f64
}

/// Everything a trial needs besides the target state and seed. The
/// first-slot candidate set does not depend on the trial and is shared.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub sched: SlotSchedule,
    pub m: u32,
    pub p: f64,
    pub channel: ChannelModel,
    pub rule: DecodeRule,
    pub resolution_factor: u32,
    pub cap: f64,
    pub first_slot: Arc<TrajectorySet>,
}

impl SearchContext {
    pub fn new(sched: SlotSchedule, m: u32, p: f64, channel: ChannelModel) -> Result<Self> {
        Self::with_options(
            sched,
            m,
            p,
            channel,
            DecodeRule::default(),
            DEFAULT_RESOLUTION_FACTOR,
            DEFAULT_CAP,
        )
    }

    pub fn with_options(
        sched: SlotSchedule,
        m: u32,
        p: f64,
        channel: ChannelModel,
        rule: DecodeRule,
        resolution_factor: u32,
        cap: f64,
    ) -> Result<Self> {
        channel.validate()?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config(format!("design bias p = {p} must lie in (0,1)")));
        }
        let first_slot = Arc::new(enumerate_first_slot(&sched, m, resolution_factor, cap)?);
        Ok(Self {
            sched,
            m,
            p,
            channel,
            rule,
            resolution_factor,
            cap,
            first_slot,
        })
    }

    fn decode(&self, set: &TrajectorySet, cb: &QueryCodebook, j: usize, ys: &[f64]) -> Result<Decoded> {
        match self.rule {
            DecodeRule::MaxInfoDensity => mi_decode(&self.channel, self.p, set, cb, j, ys),
            DecodeRule::NearestNeighbor => nn_decode(set, cb, j, ys),
        }
    }
}

/// Runs one search: draws a codebook and channel noise from `seed`, decodes
/// slot by slot conditioned on earlier estimates and scores the estimated
/// trajectory against the truth.
pub fn run_trial(ctx: &SearchContext, state: &TargetState, seed: u64) -> Result<SearchOutcome> {
    let sched = &ctx.sched;
    state.validate(sched)?;
    let truth = quantized_trajectory(state, sched, ctx.m)?;
    let cb = generate_codebook(sched, ctx.m, ctx.p, derive_key(seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(seed, 2));
    let d = sched.dimension();

    let mut est_s = vec![0.0; d];
    let mut est_v: Vec<Vec<f64>> = Vec::with_capacity(sched.num_slots());
    let mut est_pos = vec![0.0; d];
    let mut slots = Vec::with_capacity(sched.num_slots());

    for j in 0..sched.num_slots() {
        let w = &truth.slots[j];
        let ys: Vec<f64> = (0..w.len())
            .map(|k| {
                let x = cb.bit(j, k, w.row(k));
                ctx.channel.sample_output(cb.query_measure(j, k), x, &mut rng)
            })
            .collect();
        let later;
        let set: &TrajectorySet = if j == 0 {
            &ctx.first_slot
        } else {
            later = enumerate_later_slot(&est_pos, sched, j, ctx.m, ctx.resolution_factor, ctx.cap)?;
            &later
        };
        let dec = ctx.decode(set, &cb, j, &ys)?;
        let wit = &set.witnesses[dec.index];
        let n = sched.len(j);
        let close = if j == 0 {
            est_s.clone_from(&wit.s);
            in_neighborhood(&state.initial, &state.velocities[0], &wit.s, &wit.v, n, ctx.m)
        } else {
            in_velocity_neighborhood(&state.velocities[j], &wit.v, n, ctx.m)
        };
        let start = if j == 0 { &wit.s } else { &est_pos };
        est_pos = start.iter().zip(&wit.v).map(|(&x, &v)| locate(x, v, n)).collect();
        est_v.push(wit.v.clone());
        slots.push(SlotDecode {
            candidates: set.len(),
            winner: dec.index,
            score: dec.score,
            margin: dec.margin,
            in_neighborhood: close,
        });
    }

    let estimate = TargetState::new(est_s, est_v);
    let errors = (0..=sched.horizon())
        .map(|t| {
            let a = locate_piecewise(state, sched, t)?;
            let b = locate_piecewise(&estimate, sched, t)?;
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    let resolution = target_resolution(sched, ctx.m);
    Ok(SearchOutcome {
        estimate,
        errors,
        max_error,
        resolution,
        excess: max_error > resolution,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::SizeFunction;
    use crate::infodensity::empirical_info_density;
    use crate::kinematics::CellMatrix;
    use rand::Rng;

    fn reference_bsc() -> ChannelModel {
        ChannelModel::bsc(0.2, SizeFunction::new(2.0, 0.5))
    }

    #[test]
    fn select_prefers_lowest_index_on_ties() {
        let d = select([1.0, 3.0, 3.0, 2.0].into_iter(), true).unwrap();
        assert_eq!((d.index, d.margin), (1, 0.0));
        let d = select([1.0, 0.5, 0.5].into_iter(), false).unwrap();
        assert_eq!((d.index, d.score, d.margin), (1, 0.5, 0.0));
        let d = select([4.0].into_iter(), true).unwrap();
        assert_eq!((d.index, d.margin), (0, 0.0));
        assert!(matches!(select(std::iter::empty(), true), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn bsc_scorer_matches_literal_density_sum() {
        let sched = SlotSchedule::constant_velocity(4, 1, 0.25).unwrap();
        let set = enumerate_first_slot(&sched, 2, 4, DEFAULT_CAP).unwrap();
        let ch = reference_bsc();
        let p = 0.23;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..50 {
            let cb = generate_codebook(&sched, 2, p, trial).unwrap();
            let ys: Vec<f64> = (0..4).map(|_| rng.random_range(0..2) as f64).collect();
            let dec = mi_decode(&ch, p, &set, &cb, 0, &ys).unwrap();
            let literal = |w: &CellMatrix| empirical_info_density(&ch, p, p, &cb.codeword(0, w), &ys).unwrap();
            assert!((dec.score - literal(&set.entries[dec.index])).abs() < 1e-12);
            let best = set.entries.iter().map(literal).fold(f64::NEG_INFINITY, f64::max);
            assert!((dec.score - best).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_codeword_wins_nearest_neighbor() {
        let sched = SlotSchedule::constant_velocity(5, 1, 0.1).unwrap();
        let set = enumerate_first_slot(&sched, 2, 4, DEFAULT_CAP).unwrap();
        let cb = generate_codebook(&sched, 2, 0.5, 3).unwrap();
        let target = set.len() / 2;
        let ys: Vec<f64> = cb
            .codeword(0, &set.entries[target])
            .iter()
            .map(|&b| b as u8 as f64)
            .collect();
        let dec = nn_decode(&set, &cb, 0, &ys).unwrap();
        assert_eq!(dec.score, 0.0);
        assert_eq!(
            cb.codeword(0, &set.entries[dec.index]),
            cb.codeword(0, &set.entries[target])
        );
        assert!(dec.index <= target);
    }

    #[test]
    fn stationary_noiseless_search_finds_the_cell() {
        // Distinct per-cell codewords at n = 12 with 24 cells are near certain
        // for this seed; the tiny flip probability makes errors negligible.
        let sched = SlotSchedule::constant_velocity(12, 1, 0.0).unwrap();
        let ch = ChannelModel::bsc(1e-9, SizeFunction::constant(1.0));
        let ctx = SearchContext::new(sched, 2, 0.5, ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..50 {
            let s = rng.random::<f64>();
            let st = TargetState::new(vec![s], vec![vec![0.0]]);
            let out = run_trial(&ctx, &st, seed).unwrap();
            let cb = generate_codebook(&ctx.sched, 2, 0.5, derive_key(seed, 1)).unwrap();
            let truth = quantized_trajectory(&st, &ctx.sched, 2).unwrap();
            let mine = cb.codeword(0, &truth.slots[0]);
            let unique = ctx
                .first_slot
                .entries
                .iter()
                .filter(|w| cb.codeword(0, w) == mine)
                .count()
                == 1;
            if unique {
                assert_eq!(ctx.first_slot.entries[out.slots[0].winner], truth.slots[0]);
                assert!(!out.excess);
            }
        }
    }

    #[test]
    fn outcome_shape_and_neighborhood_implication() {
        let sched = SlotSchedule::new(vec![6, 10], 1, 0.1).unwrap();
        let ctx = SearchContext::new(sched, 4, 0.3, reference_bsc()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..40 {
            let st = TargetState::new(
                vec![rng.random()],
                vec![vec![rng.random_range(-0.1..=0.1)], vec![rng.random_range(-0.1..=0.1)]],
            );
            let out = run_trial(&ctx, &st, seed).unwrap();
            assert_eq!(out.errors.len(), 11);
            assert_eq!(out.resolution, 0.75);
            assert_eq!(out.excess, out.max_error > 0.75);
            if out.slots.iter().all(|s| s.in_neighborhood) {
                assert!(!out.excess);
            }
            assert_eq!(out.estimate.velocities.len(), 2);
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let sched = SlotSchedule::constant_velocity(6, 1, 0.1).unwrap();
        let ctx = SearchContext::new(sched, 3, 0.3, reference_bsc()).unwrap();
        let st = TargetState::new(vec![0.41], vec![vec![-0.07]]);
        assert_eq!(run_trial(&ctx, &st, 5).unwrap(), run_trial(&ctx, &st, 5).unwrap());
    }
}

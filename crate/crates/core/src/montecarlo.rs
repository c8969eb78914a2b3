//! Trial orchestration: excess-resolution probability estimates with Wilson
//! intervals and deterministic parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{achievability_bound, default_eta_grid, optimize_eta, AchievabilityMode, BoundQuery};
use crate::channels::ChannelModel;
use crate::kinematics::{SlotSchedule, TargetState};
use crate::numeric::{derive_key, wilson_interval, Z95};
use crate::search::{run_trial, DecodeRule, SearchContext};
use crate::trajectories::{DEFAULT_CAP, DEFAULT_RESOLUTION_FACTOR};
use crate::{Error, Result};

/// Minimum number of trials per estimate.
pub const MIN_TRIALS: u64 = 100;

/// How target states are drawn for each trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "states")]
pub enum StateDistribution {
    /// Uniform over `[0,1]^d x [-v_+, v_+]^{B x d}`.
    #[default]
    Uniform,
    /// Trial `i` uses entry `i mod len`.
    Fixed(Vec<TargetState>),
}

impl StateDistribution {
    /// Draws the state for trial `index` whose seed is `trial_seed`.
    pub fn draw(&self, sched: &SlotSchedule, index: u64, trial_seed: u64) -> TargetState {
        match self {
            Self::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_key(trial_seed, 3));
                let d = sched.dimension();
                let vp = sched.max_speed();
                let initial = (0..d).map(|_| rng.random::<f64>()).collect();
                let velocities = (0..sched.num_slots())
                    .map(|_| {
                        (0..d)
                            .map(|_| if vp > 0.0 { rng.random_range(-vp..=vp) } else { 0.0 })
                            .collect()
                    })
                    .collect();
                TargetState::new(initial, velocities)
            }
            Self::Fixed(states) => states[(index % states.len() as u64) as usize].clone(),
        }
    }

    fn validate(&self, sched: &SlotSchedule) -> Result<()> {
        if let Self::Fixed(states) = self {
            if states.is_empty() {
                return Err(Error::config("fixed state list is empty"));
            }
            for s in states {
                s.validate(sched)?;
            }
        }
        Ok(())
    }
}

/// Boundary and maximum-speed states that probe the worst case: starts at
/// cell edges and at the walls, moving at `+-v_+` in every slot.
pub fn adversarial_states(sched: &SlotSchedule, m: u32) -> Vec<TargetState> {
    let d = sched.dimension();
    let vp = sched.max_speed();
    let cells = (sched.len(0) * m) as f64;
    let starts = [0.0, 1.0, 0.5, 1.0 / cells, 1.0 - 1.0 / cells, 0.5 + 0.5 / cells];
    let mut out = Vec::new();
    for &s in &starts {
        for sign in [1.0, -1.0] {
            let velocities = (0..sched.num_slots())
                .map(|j| vec![if j % 2 == 0 { sign * vp } else { -sign * vp }; d])
                .collect();
            out.push(TargetState::new(vec![s; d], velocities));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    pub excess_count: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    pub fn from_counts(excess_count: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(excess_count, trials, Z95);
        Self {
            trials,
            excess_count,
            p_hat: excess_count as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }

    /// Standard error implied by the Wilson interval half-width.
    pub fn std_error(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / (2.0 * Z95)
    }
}

/// Seed of trial `index` under `base_seed`.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    derive_key(base_seed, index)
}

/// Runs `trials` searches and returns the excess frequency with its 95%
/// Wilson interval. The result does not depend on the thread count.
pub fn estimate_excess_probability(
    ctx: &SearchContext,
    states: &StateDistribution,
    trials: u64,
    base_seed: u64,
) -> Result<Estimate> {
    if trials < MIN_TRIALS {
        return Err(Error::config(format!(
            "trials = {trials} must be at least {MIN_TRIALS}"
        )));
    }
    states.validate(&ctx.sched)?;
    let flags = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(base_seed, i);
            let state = states.draw(&ctx.sched, i, seed);
            run_trial(ctx, &state, seed).map(|o| o.excess)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Estimate::from_counts(
        flags.iter().filter(|&&e| e).count() as u64,
        trials,
    ))
}

/// The swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    /// Grid parameter `M` with the base schedule.
    M(Vec<u32>),
    /// Horizon `n_B`, split into the base schedule's number of slots.
    N(Vec<u32>),
    /// Rate `-log(delta)/n_B`, realised by `M = round((B+1) exp(rate n_B))`.
    Rate(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::M(_) => "m",
            Self::N(_) => "n",
            Self::Rate(_) => "rate",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::M(v) | Self::N(v) => v.len(),
            Self::Rate(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base_seed: u64,
    pub trials: u64,
    pub axis: SweepAxis,
    pub channel: ChannelModel,
    pub sched: SlotSchedule,
    pub m: u32,
    pub p: f64,
    pub rule: DecodeRule,
    pub states: StateDistribution,
    pub resolution_factor: u32,
    pub cap: f64,
    /// Fixed `eta` for the bound columns; `None` minimises over a grid.
    pub eta: Option<f64>,
}

impl SweepConfig {
    pub fn new(
        sched: SlotSchedule,
        m: u32,
        p: f64,
        channel: ChannelModel,
        axis: SweepAxis,
        trials: u64,
        base_seed: u64,
    ) -> Self {
        Self {
            base_seed,
            trials,
            axis,
            channel,
            sched,
            m,
            p,
            rule: DecodeRule::default(),
            states: StateDistribution::Uniform,
            resolution_factor: DEFAULT_RESOLUTION_FACTOR,
            cap: DEFAULT_CAP,
            eta: None,
        }
    }

    /// `(schedule, M, axis value)` for every point, in row order.
    pub fn points(&self) -> Result<Vec<(SlotSchedule, u32, f64)>> {
        let b = self.sched.num_slots();
        let d = self.sched.dimension();
        let vp = self.sched.max_speed();
        match &self.axis {
            SweepAxis::M(ms) => Ok(ms.iter().map(|&m| (self.sched.clone(), m, m as f64)).collect()),
            SweepAxis::N(ns) => ns
                .iter()
                .map(|&n| Ok((SlotSchedule::equal_split(n, b, d, vp)?, self.m, n as f64)))
                .collect(),
            SweepAxis::Rate(rates) => {
                let nb = self.sched.horizon() as f64;
                rates
                    .iter()
                    .map(|&r| {
                        let m = ((b as f64 + 1.0) * (r * nb).exp()).round();
                        if !(m >= 1.0 && m <= u32::MAX as f64) {
                            return Err(Error::config(format!("rate {r} gives grid parameter {m} out of range")));
                        }
                        Ok((self.sched.clone(), m as u32, r))
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::config(format!(
                "trials = {} must be at least {MIN_TRIALS}",
                self.trials
            )));
        }
        if self.axis.is_empty() {
            return Err(Error::config("sweep axis has no values"));
        }
        self.channel.validate()?;
        self.states.validate(&self.sched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point_id: usize,
    pub axis_value: f64,
    pub horizon: u32,
    pub m: u32,
    pub resolution: f64,
    pub estimate: Estimate,
    /// Exact-expectation bound, BSC only.
    pub bound_rcu: Option<f64>,
    pub bound_gaussian: f64,
}

fn bound_value(bq: &BoundQuery, eta: Option<f64>) -> Result<f64> {
    let rep = match eta {
        Some(eta) => achievability_bound(&BoundQuery { eta, ..bq.clone() })?,
        None => optimize_eta(bq, &default_eta_grid())?.1,
    };
    Ok(rep.probability_bound)
}

/// One estimate per axis value, in axis order, with matching bound columns.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.axis.len());
    for (point_id, (sched, m, axis_value)) in cfg.points()?.into_iter().enumerate() {
        let ctx = SearchContext::with_options(
            sched.clone(),
            m,
            cfg.p,
            cfg.channel,
            cfg.rule,
            cfg.resolution_factor,
            cfg.cap,
        )?;
        let estimate = estimate_excess_probability(
            &ctx,
            &cfg.states,
            cfg.trials,
            derive_key(cfg.base_seed, point_id as u64),
        )?;
        let bq = BoundQuery::new(
            sched.clone(),
            m,
            cfg.p,
            0.0,
            cfg.channel,
            AchievabilityMode::GaussianApprox,
        );
        let bound_gaussian = bound_value(&bq, cfg.eta)?;
        let bound_rcu = if cfg.channel.is_discrete() {
            Some(bound_value(
                &BoundQuery {
                    mode: AchievabilityMode::RcuExact,
                    ..bq
                },
                cfg.eta,
            )?)
        } else {
            None
        };
        rows.push(SweepRow {
            point_id,
            axis_value,
            horizon: sched.horizon(),
            m,
            resolution: crate::search::target_resolution(&sched, m),
            estimate,
            bound_rcu,
            bound_gaussian,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::SizeFunction;

    fn reference_bsc() -> ChannelModel {
        ChannelModel::bsc(0.2, SizeFunction::new(2.0, 0.5))
    }

    #[test]
    fn uniform_draws_respect_bounds_and_seed() {
        let sched = SlotSchedule::new(vec![4, 8], 2, 0.1).unwrap();
        let dist = StateDistribution::Uniform;
        for i in 0..200 {
            let s = dist.draw(&sched, i, trial_seed(7, i));
            s.validate(&sched).unwrap();
            assert_eq!(s, dist.draw(&sched, i, trial_seed(7, i)));
        }
        assert_ne!(
            dist.draw(&sched, 0, trial_seed(7, 0)),
            dist.draw(&sched, 1, trial_seed(7, 1))
        );
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..100_000).map(|i| trial_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 100_000);
    }

    #[test]
    fn adversarial_states_are_valid() {
        let sched = SlotSchedule::new(vec![5, 9], 1, 0.2).unwrap();
        for s in adversarial_states(&sched, 3) {
            s.validate(&sched).unwrap();
        }
    }

    #[test]
    fn near_noiseless_channel_rarely_errs() {
        let ch = ChannelModel::bsc(1e-9, SizeFunction::constant(1.0));
        let sched = SlotSchedule::constant_velocity(12, 1, 0.0).unwrap();
        let ctx = SearchContext::new(sched, 4, 0.5, ch).unwrap();
        let est = estimate_excess_probability(&ctx, &StateDistribution::Uniform, 200, 3).unwrap();
        assert!(est.p_hat < 0.05, "{est:?}");
    }

    #[test]
    fn rejects_too_few_trials() {
        let sched = SlotSchedule::constant_velocity(4, 1, 0.0).unwrap();
        let ctx = SearchContext::new(sched, 2, 0.5, reference_bsc()).unwrap();
        assert!(estimate_excess_probability(&ctx, &StateDistribution::Uniform, 10, 0).is_err());
    }

    #[test]
    fn single_point_sweep_matches_estimate() {
        let sched = SlotSchedule::constant_velocity(8, 1, 0.1).unwrap();
        let cfg = SweepConfig::new(sched.clone(), 4, 0.3, reference_bsc(), SweepAxis::M(vec![4]), 100, 11);
        let rows = sweep(&cfg).unwrap();
        let ctx = SearchContext::new(sched, 4, 0.3, reference_bsc()).unwrap();
        let est = estimate_excess_probability(&ctx, &StateDistribution::Uniform, 100, derive_key(11, 0)).unwrap();
        assert_eq!(rows[0].estimate, est);
        assert!(rows[0].bound_rcu.is_some());
    }

    #[test]
    fn rate_axis_maps_to_grid_parameter() {
        let sched = SlotSchedule::constant_velocity(16, 1, 0.0).unwrap();
        let cfg = SweepConfig::new(sched, 2, 0.3, reference_bsc(), SweepAxis::Rate(vec![0.0, 0.05]), 100, 1);
        let pts = cfg.points().unwrap();
        assert_eq!(pts[0].1, 2);
        assert_eq!(pts[1].1, (2.0 * (0.8f64).exp()).round() as u32);
    }
}

//! Information density of the query-dependent channels and its moments:
//! capacity `C`, dispersion `V_p` and the centered third absolute moment
//! `T_p`.
//!
//! All quantities are in nats. The input is Bernoulli(`p`) and, unless a
//! state is given explicitly, the channel state is `f(p)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::numeric::{golden_max, integrate};
use crate::{Error, Result};

/// Quadrature half-width in noise standard deviations for Gaussian outputs.
pub const AWGN_SPAN: f64 = 14.0;
const AWGN_TOL: f64 = 1e-11;

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!("input bias p = {p} must lie in (0,1)")));
    }
    Ok(())
}

/// `log P_Y(y)` for input Bernoulli(`p`) at channel state `u`.
pub fn log_output_marginal(ch: &ChannelModel, p: f64, u: f64, y: f64) -> f64 {
    let l1 = p.ln() + ch.log_transition_at_state(u, true, y);
    let l0 = (1.0 - p).ln() + ch.log_transition_at_state(u, false, y);
    let hi = l1.max(l0);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((l1 - hi).exp() + (l0 - hi).exp()).ln()
}

/// `iota_{p,u}(x; y)` at an explicit channel state `u`. Returns negative
/// infinity for outputs of probability zero under `x`.
pub fn info_density_at_state(ch: &ChannelModel, p: f64, u: f64, x: bool, y: f64) -> f64 {
    let num = ch.log_transition_at_state(u, x, y);
    if num == f64::NEG_INFINITY {
        return num;
    }
    num - log_output_marginal(ch, p, u, y)
}

/// `iota_{p,f(q)}(x; y)`.
pub fn info_density(ch: &ChannelModel, p: f64, q: f64, x: bool, y: f64) -> Result<f64> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("query measure {q} outside [0,1]")));
    }
    Ok(info_density_at_state(ch, p, ch.state(q), x, y))
}

/// Sum of per-symbol information densities.
pub fn empirical_info_density(ch: &ChannelModel, p: f64, q: f64, xs: &[bool], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::config(format!(
            "input and output lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let mut total = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        total += info_density(ch, p, q, x, y)?;
    }
    Ok(total)
}

/// Mean, variance and centered third absolute moment of `iota_{p,f(p)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub mean: f64,
    pub variance: f64,
    pub third_abs_moment: f64,
}

/// Expectation of `g(x, y)` under `P_X x P^u_{Y|X}`.
fn expect<G: Fn(bool, f64) -> f64 + Sync>(ch: &ChannelModel, p: f64, u: f64, g: G) -> Result<f64> {
    let mut total = 0.0;
    for (x, px) in [(false, 1.0 - p), (true, p)] {
        let xv = if x { 1.0 } else { 0.0 };
        let part = match ch {
            ChannelModel::Bsc { .. } => [0.0, 1.0]
                .iter()
                .map(|&y| ch.transition_at_state(u, x, y) * g(x, y))
                .sum::<f64>(),
            ChannelModel::Awgn { .. } => {
                let s = ch.noise_at_state(u);
                let (lo, hi) = (xv - AWGN_SPAN * s, xv + AWGN_SPAN * s);
                integrate(|y| ch.transition_at_state(u, x, y) * g(x, y), lo, hi, AWGN_TOL)?
            }
        };
        total += px * part;
    }
    Ok(total)
}

/// Moments of the information density at input bias `p` and state `u`.
pub fn moments_at_state(ch: &ChannelModel, p: f64, u: f64) -> Result<MomentReport> {
    check_p(p)?;
    let iota = |x: bool, y: f64| info_density_at_state(ch, p, u, x, y);
    let mean = expect(ch, p, u, iota)?;
    let variance = expect(ch, p, u, |x, y| (iota(x, y) - mean).powi(2))?.max(0.0);
    let third = expect(ch, p, u, |x, y| (iota(x, y) - mean).abs().powi(3))?.max(0.0);
    Ok(MomentReport {
        p,
        mean,
        variance,
        third_abs_moment: third,
    })
}

/// Moments of `iota_{p,f(p)}`.
pub fn moments(ch: &ChannelModel, p: f64) -> Result<MomentReport> {
    moments_at_state(ch, p, ch.state(p))
}

/// `E[iota_{p,f(p)}(X;Y)]`, the objective maximised by the capacity.
pub fn mean_info_density(ch: &ChannelModel, p: f64) -> Result<f64> {
    check_p(p)?;
    let u = ch.state(p);
    expect(ch, p, u, |x, y| info_density_at_state(ch, p, u, x, y))
}

/// `E[exp(-iota_{p,f(p)}(X;Y))]`, identically one for the generating law.
pub fn exp_neg_info_density_mean(ch: &ChannelModel, p: f64) -> Result<f64> {
    check_p(p)?;
    let u = ch.state(p);
    match ch {
        ChannelModel::Bsc { .. } => expect(ch, p, u, |x, y| (-info_density_at_state(ch, p, u, x, y)).exp()),
        ChannelModel::Awgn { .. } => {
            // The integrand P(y|x) exp(-iota) = P_Y(y) is evaluated as written
            // over the joint support of both inputs.
            let s = ch.noise_at_state(u);
            let mut total = 0.0;
            for (x, px) in [(false, 1.0 - p), (true, p)] {
                total += px
                    * integrate(
                        |y| (ch.log_transition_at_state(u, x, y) - info_density_at_state(ch, p, u, x, y)).exp(),
                        -AWGN_SPAN * s,
                        1.0 + AWGN_SPAN * s,
                        AWGN_TOL,
                    )?;
            }
            Ok(total)
        }
    }
}

/// Capacity-achieving input bias with its moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub p: f64,
    pub mean: f64,
    pub variance: f64,
    pub third_abs_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub capacity: f64,
    /// Maximizers in increasing order of `p`.
    pub maximizers: Vec<Maximizer>,
    pub v_eps_low: f64,
    pub v_eps_high: f64,
}

impl CapacityReport {
    /// `V_eps`: the largest dispersion over the maximizers when `eps <= 1/2`,
    /// the smallest otherwise.
    pub fn v_epsilon(&self, eps: f64) -> f64 {
        if eps <= 0.5 {
            self.v_eps_high
        } else {
            self.v_eps_low
        }
    }

    /// Smallest capacity-achieving `p`.
    pub fn smallest_maximizer(&self) -> &Maximizer {
        &self.maximizers[0]
    }

    /// Builds a report from a set of candidate maximizers.
    pub fn from_maximizers(mut maximizers: Vec<Maximizer>) -> Self {
        maximizers.sort_by(|a, b| a.p.total_cmp(&b.p));
        let capacity = maximizers.iter().map(|m| m.mean).fold(f64::NEG_INFINITY, f64::max);
        let v_eps_low = maximizers.iter().map(|m| m.variance).fold(f64::INFINITY, f64::min);
        let v_eps_high = maximizers.iter().map(|m| m.variance).fold(f64::NEG_INFINITY, f64::max);
        Self {
            capacity,
            maximizers,
            v_eps_low,
            v_eps_high,
        }
    }
}

/// Default number of grid points for the global scan.
pub const DEFAULT_GRID: usize = 2001;
/// Default value tolerance for membership in the maximizer set.
pub const DEFAULT_REFINE_TOL: f64 = 1e-9;
/// Maximizers closer than this in `p` are merged.
pub const MERGE_TOL: f64 = 1e-6;

/// Maximises `E[iota_{p,f(p)}]` over `p`: a global grid scan followed by
/// golden-section refinement around every grid-local maximum.
pub fn capacity(ch: &ChannelModel, grid_size: usize, refine_tol: f64) -> Result<CapacityReport> {
    ch.validate()?;
    if grid_size < 101 {
        return Err(Error::config(format!(
            "capacity grid needs >= 101 points, got {grid_size}"
        )));
    }
    let g = grid_size;
    let ps: Vec<f64> = (0..g).map(|i| (i + 1) as f64 / (g + 1) as f64).collect();
    let values: Vec<f64> = ps
        .par_iter()
        .map(|&p| mean_info_density(ch, p))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    for i in 0..g {
        let left = if i == 0 { f64::NEG_INFINITY } else { values[i - 1] };
        let right = if i + 1 == g { f64::NEG_INFINITY } else { values[i + 1] };
        if values[i] >= left && values[i] >= right {
            let lo = if i == 0 { 0.5 / (g + 1) as f64 } else { ps[i - 1] };
            let hi = if i + 1 == g {
                1.0 - 0.5 / (g + 1) as f64
            } else {
                ps[i + 1]
            };
            candidates.push((i, lo, hi));
        }
    }

    let mut refined: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|&(i, lo, hi)| {
            let (p, v) = golden_max(|p| mean_info_density(ch, p).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-11);
            if v >= values[i] {
                (p, v)
            } else {
                (ps[i], values[i])
            }
        })
        .collect();
    refined.sort_by(|a, b| a.0.total_cmp(&b.0));

    let best = refined.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for (p, v) in refined.into_iter().filter(|r| r.1 >= best - refine_tol) {
        match kept.last_mut() {
            Some(last) if (p - last.0).abs() < MERGE_TOL => {
                if v > last.1 {
                    *last = (p, v);
                }
            }
            _ => kept.push((p, v)),
        }
    }

    let maximizers = kept
        .into_iter()
        .map(|(p, _)| {
            let m = moments(ch, p)?;
            Ok(Maximizer {
                p,
                mean: m.mean,
                variance: m.variance,
                third_abs_moment: m.third_abs_moment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityReport::from_maximizers(maximizers))
}

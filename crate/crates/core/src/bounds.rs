//! Non-asymptotic achievability and converse bounds on the excess-resolution
//! probability, their second-order approximations and the phase-transition
//! curve.
//!
//! Logarithms are natural. Asymptotic `O(1)` and `O(log n)` remainders in the
//! second-order expressions are set to zero; reports say so in `notes`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::channels::{ChannelModel, DEFAULT_XI_MAX};
use crate::infodensity::{moments, CapacityReport, MomentReport};
use crate::kinematics::SlotSchedule;
use crate::numeric::{golden_max, phi, phi_inv, snapped_ceil};
use crate::{Error, Result};

/// Note attached to every report that drops asymptotic remainders.
pub const ZEROED_TERMS_NOTE: &str = "O(1) and O(log n) remainder terms set to 0";

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!("p = {p} must lie in (0,1)")));
    }
    Ok(())
}

/// Velocity-uncertainty and trajectory-counting part of `zeta` (everything
/// except the change-of-measure term `2 n eta K c(f(p))`).
fn zeta_counting(n: u32, k: u32, p: f64, v_plus: f64, d: usize) -> f64 {
    let n = n as f64;
    let d = d as f64;
    let crossings = snapped_ceil(2.0 * n * v_plus);
    -crossings * p.ln().min((1.0 - p).ln()) + d * (2.0 * n * v_plus + 3.0).ln() + k as f64 * d * n.ln()
}

/// Change-of-measure term `2 n eta K c(f(p))`; zero when `eta = 0` or `K = 0`.
pub fn change_of_measure_term(ch: &ChannelModel, n: u32, p: f64, eta: f64, xi_max: f64) -> Result<f64> {
    let k = ch.size_function().lipschitz();
    if eta == 0.0 || k == 0.0 {
        return Ok(0.0);
    }
    let c = ch.continuity_constant(ch.state(p), xi_max)?;
    Ok(2.0 * n as f64 * eta * k * c)
}

/// `zeta(n, k, p, v_+, eta)`.
pub fn zeta(ch: &ChannelModel, n: u32, k: u32, p: f64, v_plus: f64, eta: f64, d: usize, xi_max: f64) -> Result<f64> {
    check_p(p)?;
    Ok(change_of_measure_term(ch, n, p, eta, xi_max)? + zeta_counting(n, k, p, v_plus, d))
}

/// `tau(p, eta)` for the truncated Gaussian change of measure.
pub fn tau(ch: &ChannelModel, p: f64, eta: f64) -> f64 {
    let k = ch.size_function().lipschitz();
    let f = ch.state(p);
    let ke = k * eta;
    let num = 2.0 * (ke * (f + ke)) * (f * f + 4.0 * ke * (f + ke));
    let den = f * f * (f * f - 2.0 * ke * (f - ke));
    num / den
}

/// `(tau, zeta_G)` with `zeta_G = zeta + n tau - 2 n eta K c(f(p))`. The
/// Gaussian channel has no finite continuity constant, so `zeta_G` is built
/// from the counting part directly.
pub fn tau_and_zeta_g(
    ch: &ChannelModel,
    n: u32,
    k: u32,
    p: f64,
    eta: f64,
    v_plus: f64,
    d: usize,
) -> Result<(f64, f64)> {
    check_p(p)?;
    let t = tau(ch, p, eta);
    Ok((t, zeta_counting(n, k, p, v_plus, d) + n as f64 * t))
}

/// Slot exponent: `zeta` for discrete channels, `zeta_G` for Gaussian ones.
fn slot_zeta(ch: &ChannelModel, n: u32, k: u32, p: f64, v_plus: f64, eta: f64, d: usize, xi_max: f64) -> Result<f64> {
    match ch {
        ChannelModel::Bsc { .. } => zeta(ch, n, k, p, v_plus, eta, d, xi_max),
        ChannelModel::Awgn { .. } => Ok(tau_and_zeta_g(ch, n, k, p, eta, v_plus, d)?.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AchievabilityMode {
    /// The displayed bound with `E[exp(-iota)] = 1` substituted.
    Literal,
    /// Expectation of the minimum, computed exactly (BSC only).
    RcuExact,
    /// Berry-Esseen corrected normal approximation of the threshold form.
    GaussianApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub sched: SlotSchedule,
    pub m: u32,
    pub p: f64,
    pub eta: f64,
    pub channel: ChannelModel,
    pub xi_max: f64,
    pub mode: AchievabilityMode,
}

impl BoundQuery {
    pub fn new(sched: SlotSchedule, m: u32, p: f64, eta: f64, channel: ChannelModel, mode: AchievabilityMode) -> Self {
        Self {
            sched,
            m,
            p,
            eta,
            channel,
            xi_max: DEFAULT_XI_MAX,
            mode,
        }
    }
}

/// Contribution of one slot to the achievability bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTerm {
    pub slot_len: u32,
    /// `k` in `zeta(N, k, ...)`: 4 for the first slot, 3 afterwards.
    pub k: u32,
    pub zeta: f64,
    /// Decoding-error term before capping at 1.
    pub coding_raw: f64,
    /// `min(1, coding_raw)`.
    pub coding: f64,
    /// `4 N exp(-2 (N M)^d eta^2)`.
    pub atypicality: f64,
    /// `exp(-N (1 - log 2) / 2)` for Gaussian channels, else 0.
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityReport {
    pub mode: AchievabilityMode,
    /// Sum of the slot terms (may exceed 1).
    pub value: f64,
    /// `min(1, value)`.
    pub probability_bound: f64,
    pub vacuous: bool,
    pub slots: Vec<SlotTerm>,
    pub warnings: Vec<String>,
}

/// `ln C(n, k)`.
fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `E[min{1, exp(log_gamma - iota_N)}]` for the BSC with crossover `eps`
/// and input bias `p`, where `iota_N` sums `N` i.i.d. densities.
///
/// With `D` disagreements, `a` ones among the agreeing outputs and `b` ones
/// among the disagreeing outputs, `iota_N` depends only on `D` and `a + b`.
pub fn bsc_rcu(eps: f64, p: f64, n: u32, log_gamma: f64) -> f64 {
    let n = n as u64;
    let py1 = p * (1.0 - eps) + (1.0 - p) * eps;
    let (l1, l0) = (py1.ln(), (1.0 - py1).ln());
    let (le, lc) = (eps.ln(), (1.0 - eps).ln());
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let per_d: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|dd| {
            let lpd = ln_choose(n, dd) + dd as f64 * le + (n - dd) as f64 * lc;
            let agree = n - dd;
            let mut acc = 0.0;
            for a in 0..=agree {
                let lpa = ln_choose(agree, a) + a as f64 * lp + (agree - a) as f64 * lq;
                for b in 0..=dd {
                    let lpb = ln_choose(dd, b) + b as f64 * lq + (dd - b) as f64 * lp;
                    let ones = (a + b) as f64;
                    let iota = dd as f64 * le + agree as f64 * lc - ones * l1 - (n as f64 - ones) * l0;
                    let term = (log_gamma - iota).min(0.0).exp();
                    acc += (lpd + lpa + lpb).exp() * term;
                }
            }
            acc
        })
        .collect();
    per_d.iter().sum()
}

/// Berry-Esseen upper estimate of `Pr{sum of N densities <= threshold}`.
pub fn berry_esseen_upper(m: &MomentReport, n: u32, threshold: f64) -> f64 {
    let nf = n as f64;
    let sd = (nf * m.variance).sqrt();
    if sd == 0.0 {
        return if threshold >= nf * m.mean { 1.0 } else { 0.0 };
    }
    phi((threshold - nf * m.mean) / sd) + 6.0 * m.third_abs_moment / (nf * m.variance.powi(3)).sqrt()
}

/// Upper bound on the excess-resolution probability of the slot-by-slot
/// query procedure at resolution `(B+1)/M`.
pub fn achievability_bound(bq: &BoundQuery) -> Result<AchievabilityReport> {
    bq.channel.validate()?;
    check_p(bq.p)?;
    bq.sched.check_bound_hypotheses()?;
    if bq.m == 0 {
        return Err(Error::config("grid parameter M must be positive"));
    }
    if !(bq.eta >= 0.0) {
        return Err(Error::config(format!("eta = {} must be >= 0", bq.eta)));
    }
    if bq.mode == AchievabilityMode::RcuExact && !bq.channel.is_discrete() {
        return Err(Error::ModeMismatch(
            "rcu_exact is only available for the BSC; use gaussian_approx or literal".into(),
        ));
    }
    let d = bq.sched.dimension();
    let v_plus = bq.sched.max_speed();
    let gaussian = !bq.channel.is_discrete();
    let mom = if bq.mode == AchievabilityMode::GaussianApprox {
        Some(moments(&bq.channel, bq.p)?)
    } else {
        None
    };
    let mut warnings = Vec::new();
    let mut slots = Vec::with_capacity(bq.sched.num_slots());
    for j in 0..bq.sched.num_slots() {
        let n = bq.sched.len(j);
        let (k, m_exp) = if j == 0 { (4, 2 * d) } else { (3, d) };
        let z = slot_zeta(&bq.channel, n, k, bq.p, v_plus, bq.eta, d, bq.xi_max)?;
        let log_m = m_exp as f64 * (bq.m as f64).ln();
        let coding_raw = match bq.mode {
            // E[exp(-iota)] is exactly 1 under the generating law.
            AchievabilityMode::Literal => (z + log_m).exp(),
            AchievabilityMode::RcuExact => {
                let eps = bq.channel.noise_at_state(bq.channel.state(bq.p));
                bsc_rcu(eps, bq.p, n, z + log_m)
            }
            AchievabilityMode::GaussianApprox => {
                let m = mom.as_ref().expect("moments computed");
                berry_esseen_upper(m, n, log_m + z + (n as f64).ln()) + 1.0 / n as f64
            }
        };
        let cells = (n as f64 * bq.m as f64).powi(d as i32);
        slots.push(SlotTerm {
            slot_len: n,
            k,
            zeta: z,
            coding_raw,
            coding: coding_raw.min(1.0),
            atypicality: 4.0 * n as f64 * (-2.0 * cells * bq.eta * bq.eta).exp(),
            truncation: if gaussian {
                (-(n as f64) * (1.0 - 2f64.ln()) / 2.0).exp()
            } else {
                0.0
            },
        });
    }
    if bq.mode == AchievabilityMode::Literal && slots.iter().any(|s| s.coding_raw >= 1.0) {
        warnings.push(
            "literal form is vacuous: with E[exp(-iota)] = 1 the decoding term is min{1, exp(zeta) M^kd} = 1".into(),
        );
    }
    let value: f64 = slots.iter().map(|s| s.coding + s.atypicality + s.truncation).sum();
    if value >= 1.0 {
        warnings.push(format!("bound value {value:.4} >= 1 carries no information"));
    }
    Ok(AchievabilityReport {
        mode: bq.mode,
        value,
        probability_bound: value.min(1.0),
        vacuous: value >= 1.0,
        slots,
        warnings,
    })
}

/// Default grid for [`optimize_eta`]: zero and 64 log-spaced points in
/// `[1e-4, 0.5]`.
pub fn default_eta_grid() -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), 0.5f64.ln());
    std::iter::once(0.0)
        .chain((0..64).map(|i| (lo + (hi - lo) * i as f64 / 63.0).exp()))
        .collect()
}

/// Minimises the achievability bound over `eta`; ties keep the first grid
/// point.
pub fn optimize_eta(bq: &BoundQuery, grid: &[f64]) -> Result<(f64, AchievabilityReport)> {
    let mut best: Option<(f64, AchievabilityReport)> = None;
    for &eta in grid {
        let rep = achievability_bound(&BoundQuery { eta, ..bq.clone() })?;
        if best.as_ref().is_none_or(|b| rep.value < b.1.value) {
            best = Some((eta, rep));
        }
    }
    best.ok_or_else(|| Error::config("empty eta grid"))
}

/// Uniform grid of query measures `1/(G+1), ..., G/(G+1)`.
pub fn default_q_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / (points + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverseOptions {
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    /// Use `2(1 + 4B) d beta` in place of `2(1 + 4B v_+) d beta`.
    pub statement_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverseReport {
    /// Upper bound on `-(B+1) d log delta`.
    pub value: f64,
    /// Upper bound on `-log delta / n_B`.
    pub rate: f64,
    pub q_star: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Berry-Esseen quantile argument at `q_star`.
    pub quantile_arg: f64,
    /// Whether the Cantelli bound was tighter at `q_star`.
    pub cantelli_at_optimum: bool,
    pub speed_term_omitted: bool,
    pub statement_form: bool,
}

/// Converse on the resolution of any non-adaptive procedure, with the inner
/// supremum restricted to i.i.d. plans of constant query measure `q`.
pub fn converse_bound(
    sched: &SlotSchedule,
    eps: f64,
    ch: &ChannelModel,
    q_grid: &[f64],
    opts: ConverseOptions,
) -> Result<ConverseReport> {
    ch.validate()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config(format!("eps = {eps} must lie in (0,1)")));
    }
    let nb = sched.horizon() as f64;
    let b = sched.num_slots() as f64;
    let d = sched.dimension() as f64;
    let v_plus = sched.max_speed();
    let beta = opts.beta.unwrap_or(1.0 / nb.sqrt());
    let kappa = opts.kappa.unwrap_or(1.0 / nb);
    let slack_factor = if opts.statement_form {
        1.0 + 4.0 * b
    } else {
        1.0 + 4.0 * b * v_plus
    };
    if !(beta > 0.0 && beta < (1.0 - eps) / 2.0) {
        return Err(Error::config(format!("beta = {beta} outside (0, (1-eps)/2)")));
    }
    let kappa_max = 1.0 - eps - 2.0 * (1.0 + 4.0 * b) * d * beta;
    if !(kappa > 0.0 && kappa < kappa_max) && opts.statement_form {
        return Err(Error::config(format!("kappa = {kappa} outside (0, {kappa_max})")));
    }
    let base_arg = eps + 2.0 * slack_factor * d * beta + kappa;
    if q_grid.is_empty() {
        return Err(Error::config("empty q grid"));
    }
    if !(base_arg < 1.0) {
        return Err(Error::Numerical(format!(
            "normal quantile argument {base_arg} outside (0,1)"
        )));
    }
    // Each q yields the smaller of the Berry-Esseen quantile bound (infinite
    // once its argument reaches 1) and the Cantelli bound
    // nE + sqrt(nV eps' / (1 - eps')).
    let evals = q_grid
        .par_iter()
        .map(|&q| {
            let m = moments(ch, q)?;
            let cantelli = nb * m.mean + (nb * m.variance * base_arg / (1.0 - base_arg)).sqrt();
            if m.variance <= 0.0 {
                return Ok((q, nb * m.mean, base_arg, false));
            }
            let arg = base_arg + 6.0 * m.third_abs_moment / (nb * m.variance.powi(3)).sqrt();
            let normal = match phi_inv(arg) {
                Ok(z) => nb * m.mean + (nb * m.variance).sqrt() * z,
                Err(_) => f64::INFINITY,
            };
            Ok(if normal <= cantelli {
                (q, normal, arg, false)
            } else {
                (q, cantelli, arg, true)
            })
        })
        .collect::<Result<Vec<(f64, f64, f64, bool)>>>()?;
    let (q_star, r, arg, cantelli_at_optimum) = evals
        .into_iter()
        .reduce(|best, e| if best.1 >= e.1 { best } else { e })
        .expect("non-empty grid");
    let speed_term_omitted = v_plus == 0.0;
    let speed_term: f64 = if speed_term_omitted {
        0.0
    } else {
        (0..sched.num_slots())
            .map(|j| (2.0 * sched.len(j) as f64 * v_plus).ln())
            .sum()
    };
    let value = r - (b + 1.0) * d * beta.ln() - speed_term - kappa.ln();
    Ok(ConverseReport {
        value,
        rate: value / ((b + 1.0) * d * nb),
        q_star,
        beta,
        kappa,
        quantile_arg: arg,
        cantelli_at_optimum,
        speed_term_omitted,
        statement_form: opts.statement_form,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub horizon: u32,
    pub eps: f64,
    pub p: f64,
    pub eta: f64,
    /// Achievable `-log delta`.
    pub achievable: f64,
    /// Converse `-log delta`.
    pub converse: f64,
    pub achievable_rate: f64,
    pub converse_rate: f64,
    /// `C / ((B+1) d)`.
    pub first_order_rate: f64,
    /// `C / (2 (B+1) d)`.
    pub cold_restart_rate: f64,
    /// Slot error allocation maximising the achievable expression.
    pub allocation: Vec<f64>,
    pub notes: Vec<String>,
}

/// Evaluates the max-min achievable expression for a fixed allocation.
fn achievable_log_resolution(
    sched: &SlotSchedule,
    cap: &CapacityReport,
    ch: &ChannelModel,
    p: f64,
    eta: f64,
    alloc: &[f64],
) -> Result<f64> {
    let d = sched.dimension();
    let v_plus = sched.max_speed();
    let c = cap.capacity;
    let mut inner = f64::INFINITY;
    for (j, &e) in alloc.iter().enumerate() {
        let n = sched.len(j);
        let nf = n as f64;
        let k = if j == 0 { 4 } else { 3 };
        let z = slot_zeta(ch, n, k, p, v_plus, eta, d, DEFAULT_XI_MAX)?;
        let mut term = nf * c + (nf * cap.v_epsilon(e)).sqrt() * phi_inv(e)? - z - nf.ln();
        if j == 0 {
            term /= 2.0;
        }
        inner = inner.min(term);
    }
    Ok(inner - d as f64 * (sched.num_slots() as f64 + 1.0).ln())
}

/// Compositions of `units` into `parts` positive integers.
fn compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![units]];
    }
    let mut out = Vec::new();
    for first in 1..=units.saturating_sub(parts - 1) {
        for mut rest in compositions(units - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Second-order achievable and converse resolution decay for `eps`.
pub fn second_order_rates(
    sched: &SlotSchedule,
    eps: f64,
    ch: &ChannelModel,
    cap: &CapacityReport,
) -> Result<RateReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config(format!("eps = {eps} must lie in (0,1)")));
    }
    let nb = sched.horizon();
    let nbf = nb as f64;
    let b = sched.num_slots();
    let d = sched.dimension() as f64;
    let p = cap.smallest_maximizer().p;
    let eta = nbf.ln() / nbf;

    let alloc_of = |ks: &[usize], units: usize| ks.iter().map(|&k| eps * k as f64 / units as f64).collect::<Vec<_>>();
    let mut best_alloc = vec![eps];
    let mut best = achievable_log_resolution(sched, cap, ch, p, eta, &best_alloc)?;
    if b > 1 {
        let units = ((eps / 0.01).round() as usize).max(b);
        best = f64::NEG_INFINITY;
        for ks in compositions(units, b) {
            let a = alloc_of(&ks, units);
            let v = achievable_log_resolution(sched, cap, ch, p, eta, &a)?;
            if v > best {
                best = v;
                best_alloc = a;
            }
        }
        // Pairwise transfers with shrinking step.
        let mut step = eps / units as f64 / 2.0;
        while step > 1e-9 {
            let mut improved = false;
            for from in 0..b {
                for to in 0..b {
                    if from == to || best_alloc[from] - step <= 0.0 {
                        continue;
                    }
                    let mut a = best_alloc.clone();
                    a[from] -= step;
                    a[to] += step;
                    let v = achievable_log_resolution(sched, cap, ch, p, eta, &a)?;
                    if v > best {
                        best = v;
                        best_alloc = a;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }
    let achievable = best / d;
    let bp1 = b as f64 + 1.0;
    let converse = (nbf * cap.capacity + (nbf * cap.v_epsilon(eps)).sqrt() * phi_inv(eps)?) / (bp1 * d);
    let first_order_rate = cap.capacity / (bp1 * d);
    Ok(RateReport {
        horizon: nb,
        eps,
        p,
        eta,
        achievable,
        converse,
        achievable_rate: achievable / nbf,
        converse_rate: converse / nbf,
        first_order_rate,
        cold_restart_rate: first_order_rate / 2.0,
        allocation: best_alloc,
        notes: vec![
            ZEROED_TERMS_NOTE.into(),
            format!("eta = log(n_B)/n_B = {eta:.3e}; p = smallest capacity maximizer"),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub n: u32,
    pub rate: f64,
    pub epsilon_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    /// Rate at which the curves cross 1/2.
    pub threshold: f64,
    pub samples: Vec<PhaseSample>,
    pub printed_form: bool,
}

/// `eps*(rate) = Phi((2 d n rate - n C) / sqrt(n V_eps))` for each `n`; the
/// `printed_form` flag uses `d` in place of `2 d`.
pub fn phase_curve(
    ns: &[u32],
    d: usize,
    cap: &CapacityReport,
    eps_for_veps: f64,
    rates: &[f64],
    printed_form: bool,
) -> Result<PhaseCurve> {
    let v = cap.v_epsilon(eps_for_veps);
    if !(v > 0.0) {
        return Err(Error::Numerical("dispersion is zero; phase curve is a step".into()));
    }
    let factor = if printed_form { d as f64 } else { 2.0 * d as f64 };
    let c = cap.capacity;
    let samples = ns
        .iter()
        .flat_map(|&n| {
            let nf = n as f64;
            rates.iter().map(move |&rate| PhaseSample {
                n,
                rate,
                epsilon_star: phi((factor * nf * rate - nf * c) / (nf * v).sqrt()),
            })
        })
        .collect();
    Ok(PhaseCurve {
        threshold: c / factor,
        samples,
        printed_form,
    })
}

/// `I(theta, sigma^2) = 2 theta sigma^2 + log(1 - 2 theta sigma^2) / 2`.
pub fn chernoff_exponent(theta: f64, sigma: f64) -> f64 {
    let x = 2.0 * theta * sigma * sigma;
    x + 0.5 * (1.0 - x).ln()
}

/// Chernoff bound `exp(-n (1 - log 2)/2)` on `Pr{mean of n squared
/// N(0, sigma^2) > 2 sigma^2}` and its optimal `theta = 1/(4 sigma^2)`.
pub fn gaussian_tail(n: u32, sigma: f64) -> (f64, f64) {
    (
        (-(n as f64) * (1.0 - 2f64.ln()) / 2.0).exp(),
        1.0 / (4.0 * sigma * sigma),
    )
}

/// Numerically maximises `I(theta, sigma^2)` over `2 theta sigma^2 < 1`.
pub fn max_chernoff_exponent(sigma: f64) -> (f64, f64) {
    let upper = 1.0 / (2.0 * sigma * sigma);
    golden_max(
        |t| chernoff_exponent(t, sigma),
        0.0,
        upper * (1.0 - 1e-12),
        1e-14 * upper,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::SizeFunction;
    use crate::infodensity::{capacity, DEFAULT_GRID, DEFAULT_REFINE_TOL};
    use approx::assert_abs_diff_eq;

    fn reference_bsc() -> ChannelModel {
        ChannelModel::bsc(0.2, SizeFunction::new(2.0, 0.5))
    }

    fn reference_awgn() -> ChannelModel {
        ChannelModel::awgn(2.0, SizeFunction::new(2.0, 0.5))
    }

    #[test]
    fn zeta_collapsed_terms() {
        let z = zeta(&reference_bsc(), 10, 4, 0.5, 0.0, 0.0, 1, DEFAULT_XI_MAX).unwrap();
        assert_abs_diff_eq!(z, 3f64.ln() + 4.0 * 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(z, 10.3089, epsilon = 1e-4);
        let z3 = zeta(&reference_bsc(), 10, 3, 0.5, 0.0, 0.0, 1, DEFAULT_XI_MAX).unwrap();
        assert_abs_diff_eq!(z - z3, 10f64.ln(), epsilon = 1e-12);
        assert!(zeta(&reference_bsc(), 10, 3, 1.0, 0.0, 0.0, 1, DEFAULT_XI_MAX).is_err());
    }

    #[test]
    fn zeta_full_config_term_by_term() {
        let ch = reference_bsc();
        let (n, p, vp, eta) = (10u32, 0.5, 0.1, 0.01);
        let c = ch.continuity_constant(ch.state(p), DEFAULT_XI_MAX).unwrap();
        let expected =
            2.0 * 10.0 * eta * 2.0 * c - 2.0 * 0.5f64.ln() + (2.0 * 10.0 * vp + 3.0f64).ln() + 4.0 * 10f64.ln();
        assert_abs_diff_eq!(
            zeta(&ch, n, 4, p, vp, eta, 1, DEFAULT_XI_MAX).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tau_and_zeta_g_relations() {
        let ch = reference_awgn();
        let (t0, zg0) = tau_and_zeta_g(&ch, 20, 4, 0.3, 0.0, 0.05, 1).unwrap();
        assert_eq!(t0, 0.0);
        let bsc_like = zeta(&ch, 20, 4, 0.3, 0.05, 0.0, 1, DEFAULT_XI_MAX).unwrap();
        assert_abs_diff_eq!(zg0, bsc_like, epsilon = 1e-12);

        let (t, zg) = tau_and_zeta_g(&ch, 20, 4, 0.3, 0.01, 0.05, 1).unwrap();
        let f = 2.0 * 0.3 + 0.5;
        let ke = 2.0 * 0.01;
        let expected_tau =
            2.0 * (ke * (f + ke)) * (f * f + 4.0 * ke * (f + ke)) / (f * f * (f * f - 2.0 * ke * (f - ke)));
        assert_abs_diff_eq!(t, expected_tau, epsilon = 1e-15);
        assert_abs_diff_eq!(zg - zg0, 20.0 * t, epsilon = 1e-12);
    }

    #[test]
    fn literal_bound_is_vacuous_exactly() {
        let sched = SlotSchedule::constant_velocity(20, 1, 0.05).unwrap();
        let bq = BoundQuery::new(sched, 2, 0.23, 0.1, reference_bsc(), AchievabilityMode::Literal);
        let rep = achievability_bound(&bq).unwrap();
        let s = &rep.slots[0];
        assert_eq!(s.coding, (s.zeta + 2.0 * 2f64.ln()).exp().min(1.0));
        assert_eq!(s.coding, 1.0);
        assert!(rep.vacuous && !rep.warnings.is_empty());
    }

    #[test]
    fn rcu_brute_force_small_n() {
        // Enumerate all (x^n, y^n) for n = 4 directly.
        let (eps, p, n, lg) = (0.19, 0.23, 4u32, 1.3);
        let py1 = p * (1.0 - eps) + (1.0 - p) * eps;
        let mut total = 0.0;
        for xs in 0..16u32 {
            for ys in 0..16u32 {
                let mut prob = 1.0f64;
                let mut iota = 0.0f64;
                for t in 0..n {
                    let x = xs >> t & 1;
                    let y = ys >> t & 1;
                    let px = if x == 1 { p } else { 1.0 - p };
                    let pyx = if x == y { 1.0 - eps } else { eps };
                    let py = if y == 1 { py1 } else { 1.0 - py1 };
                    prob *= px * pyx;
                    iota += (pyx / py).ln();
                }
                total += prob * (lg - iota).exp().min(1.0);
            }
        }
        assert_abs_diff_eq!(bsc_rcu(eps, p, n, lg), total, epsilon = 1e-13);
    }

    #[test]
    fn rcu_is_below_literal_and_mode_checked() {
        let sched = SlotSchedule::constant_velocity(40, 1, 0.01).unwrap();
        for eta in [0.0, 0.05] {
            let lit = achievability_bound(&BoundQuery::new(
                sched.clone(),
                2,
                0.23,
                eta,
                reference_bsc(),
                AchievabilityMode::Literal,
            ))
            .unwrap();
            let rcu = achievability_bound(&BoundQuery::new(
                sched.clone(),
                2,
                0.23,
                eta,
                reference_bsc(),
                AchievabilityMode::RcuExact,
            ))
            .unwrap();
            assert!(rcu.value <= lit.value);
        }
        let err = achievability_bound(&BoundQuery::new(
            sched,
            2,
            0.23,
            0.0,
            reference_awgn(),
            AchievabilityMode::RcuExact,
        ));
        assert!(matches!(err, Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn awgn_bounds_include_truncation() {
        let sched = SlotSchedule::new(vec![30, 45], 1, 0.01).unwrap();
        let bq = BoundQuery::new(sched, 2, 0.3, 0.01, reference_awgn(), AchievabilityMode::GaussianApprox);
        let rep = achievability_bound(&bq).unwrap();
        assert_eq!(rep.slots.len(), 2);
        assert_abs_diff_eq!(
            rep.slots[1].truncation,
            (-15.0 * (1.0 - 2f64.ln()) / 2.0).exp(),
            epsilon = 1e-15
        );
        assert_eq!(rep.slots[1].k, 3);
    }

    #[test]
    fn cold_restart_is_half_and_rates_ordered() {
        let ch = reference_bsc();
        let cap = capacity(&ch, DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap();
        let sched = SlotSchedule::constant_velocity(10_000, 1, 1e-4).unwrap();
        let r = second_order_rates(&sched, 0.1, &ch, &cap).unwrap();
        assert_eq!(r.cold_restart_rate * 2.0, r.first_order_rate);
        assert!(r.achievable_rate <= r.converse_rate);
        let sched2 = SlotSchedule::equal_split(3000, 2, 1, 1.0 / 3000.0).unwrap();
        let r2 = second_order_rates(&sched2, 0.1, &ch, &cap).unwrap();
        assert!(r2.achievable_rate <= r2.converse_rate);
        assert_abs_diff_eq!(r2.allocation.iter().sum::<f64>(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn phase_threshold_and_monotonicity() {
        let cap = capacity(&reference_bsc(), DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap();
        let c = cap.capacity;
        let curve = phase_curve(
            &[100, 400],
            1,
            &cap,
            0.5,
            &[c / 2.0 - 0.01, c / 2.0, c / 2.0 + 0.01],
            false,
        )
        .unwrap();
        assert_eq!(curve.threshold, c / 2.0);
        assert_eq!(curve.samples[1].epsilon_star, 0.5);
        assert!(curve.samples[0].epsilon_star < 0.5 && curve.samples[2].epsilon_star > 0.5);
        // steeper for larger n
        assert!(curve.samples[5].epsilon_star > curve.samples[2].epsilon_star);
        let printed = phase_curve(&[100], 1, &cap, 0.5, &[c], true).unwrap();
        assert_eq!(printed.threshold, c);
        assert_abs_diff_eq!(printed.samples[0].epsilon_star, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn chernoff_optimum() {
        for sigma in [0.5, 1.0, 2.0] {
            let (theta, value) = max_chernoff_exponent(sigma);
            assert_abs_diff_eq!(value, (1.0 - 2f64.ln()) / 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(theta, gaussian_tail(10, sigma).1, epsilon = 1e-5 / (sigma * sigma));
            // derivative 2 sigma^2 - sigma^2/(1 - 2 theta sigma^2) vanishes
            let t = gaussian_tail(10, sigma).1;
            assert_abs_diff_eq!(
                2.0 * sigma * sigma - sigma * sigma / (1.0 - 2.0 * t * sigma * sigma),
                0.0,
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!((1.0 - 2f64.ln()) / 2.0, 0.1534264, epsilon = 1e-7);
    }

    #[test]
    fn compositions_cover_simplex() {
        assert_eq!(compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert_eq!(compositions(5, 3).len(), 6);
    }
}

//! Query-dependent noisy oracles. The channel state is `u = f(q)` where `q`
//! is the Lebesgue measure of the posed query region and `f` is an affine
//! size function.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default half-width of the state interval used for the continuity constant.
pub const DEFAULT_XI_MAX: f64 = 1e-3;

/// Affine size function `f(q) = a q + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeFunction {
    pub a: f64,
    pub b: f64,
}

impl SizeFunction {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn constant(b: f64) -> Self {
        Self { a: 0.0, b }
    }

    #[inline]
    pub fn eval(&self, q: f64) -> f64 {
        self.a * q + self.b
    }

    /// Lipschitz constant `K = |a|`.
    pub fn lipschitz(&self) -> f64 {
        self.a.abs()
    }

    /// `(min, max)` of `f` over `[0, 1]`.
    pub fn range(&self) -> (f64, f64) {
        let (x, y) = (self.eval(0.0), self.eval(1.0));
        (x.min(y), x.max(y))
    }
}

/// Query-dependent binary symmetric or additive Gaussian channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ChannelModel {
    /// Flip probability `zeta * f(q)`.
    Bsc { zeta: f64, f: SizeFunction },
    /// Noise standard deviation `sigma * f(q)`.
    Awgn { sigma: f64, f: SizeFunction },
}

fn check_query(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("query measure {q} outside [0,1]")));
    }
    Ok(())
}

impl ChannelModel {
    pub fn bsc(zeta: f64, f: SizeFunction) -> Self {
        ChannelModel::Bsc { zeta, f }
    }

    pub fn awgn(sigma: f64, f: SizeFunction) -> Self {
        ChannelModel::Awgn { sigma, f }
    }

    pub fn size_function(&self) -> SizeFunction {
        match *self {
            ChannelModel::Bsc { f, .. } | ChannelModel::Awgn { f, .. } => f,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ChannelModel::Bsc { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelModel::Bsc { .. } => "bsc",
            ChannelModel::Awgn { .. } => "awgn",
        }
    }

    /// Checks the channel over every query measure in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let f = self.size_function();
        if !(f.a.is_finite() && f.b.is_finite()) {
            return Err(Error::config("size function coefficients must be finite"));
        }
        let (lo, hi) = f.range();
        match *self {
            ChannelModel::Bsc { zeta, .. } => {
                if !(zeta > 0.0 && zeta <= 1.0) {
                    return Err(Error::config(format!("BSC zeta = {zeta} must lie in (0, 1]")));
                }
                if zeta * lo <= 0.0 {
                    return Err(Error::config(format!(
                        "BSC flip probability zeta*f(q) must be > 0 on [0,1], minimum is {}",
                        zeta * lo
                    )));
                }
                if zeta * hi > 0.5 {
                    return Err(Error::config(format!(
                        "BSC flip probability zeta*f(q) must be <= 0.5 on [0,1], maximum is {}",
                        zeta * hi
                    )));
                }
            }
            ChannelModel::Awgn { sigma, .. } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::config(format!("AWGN sigma = {sigma} must be > 0")));
                }
                if lo <= 0.0 {
                    return Err(Error::config(format!(
                        "AWGN noise std sigma*f(q) must be > 0 on [0,1], f minimum is {lo}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Channel state `f(q)`.
    #[inline]
    pub fn state(&self, q: f64) -> f64 {
        self.size_function().eval(q)
    }

    /// BSC flip probability at state `u`, or AWGN noise std at state `u`.
    #[inline]
    pub fn noise_at_state(&self, u: f64) -> f64 {
        match *self {
            ChannelModel::Bsc { zeta, .. } => zeta * u,
            ChannelModel::Awgn { sigma, .. } => sigma * u,
        }
    }

    /// Transition probability (BSC) or density (AWGN) at state `u`.
    pub fn transition_at_state(&self, u: f64, x: bool, y: f64) -> f64 {
        let xv = if x { 1.0 } else { 0.0 };
        match *self {
            ChannelModel::Bsc { zeta, .. } => {
                let eps = zeta * u;
                if y == xv {
                    1.0 - eps
                } else {
                    eps
                }
            }
            ChannelModel::Awgn { sigma, .. } => {
                let s = sigma * u;
                let z = (y - xv) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    /// Natural log of `transition_at_state`, computed without underflow.
    pub fn log_transition_at_state(&self, u: f64, x: bool, y: f64) -> f64 {
        match *self {
            ChannelModel::Bsc { .. } => self.transition_at_state(u, x, y).ln(),
            ChannelModel::Awgn { sigma, .. } => {
                let s = sigma * u;
                let z = (y - if x { 1.0 } else { 0.0 }) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// `P^q(y | x)` for query measure `q`.
    pub fn transition_prob(&self, q: f64, x: bool, y: f64) -> Result<f64> {
        check_query(q)?;
        if self.is_discrete() && y != 0.0 && y != 1.0 {
            return Err(Error::config(format!("BSC output must be 0 or 1, got {y}")));
        }
        Ok(self.transition_at_state(self.state(q), x, y))
    }

    /// Draws a channel output for input `x` under query measure `q`.
    pub fn sample_output<R: Rng + ?Sized>(&self, q: f64, x: bool, rng: &mut R) -> f64 {
        let xv = if x { 1.0 } else { 0.0 };
        let u = self.state(q);
        match *self {
            ChannelModel::Bsc { zeta, .. } => {
                if rng.random::<f64>() < zeta * u {
                    1.0 - xv
                } else {
                    xv
                }
            }
            ChannelModel::Awgn { sigma, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                xv + sigma * u * z
            }
        }
    }

    /// Smallest `c` certified by the mean value theorem such that
    /// `|log P^{u'}(y|x) - log P^u(y|x)| <= c |u' - u|` for `|u' - u| <= xi_max`.
    pub fn continuity_constant(&self, u: f64, xi_max: f64) -> Result<f64> {
        let ChannelModel::Bsc { zeta, .. } = *self else {
            return Err(Error::ModeMismatch(
                "continuity constant is only finite for the BSC".into(),
            ));
        };
        if !(xi_max > 0.0) {
            return Err(Error::config(format!("xi_max must be > 0, got {xi_max}")));
        }
        let lo = u - xi_max;
        let hi = u + xi_max;
        if lo <= 0.0 || zeta * hi >= 1.0 {
            return Err(Error::config(format!(
                "state interval [{lo}, {hi}] leaves the valid BSC range (0, {})",
                1.0 / zeta
            )));
        }
        // d/du log(zeta u) = 1/u is largest at the left end,
        // |d/du log(1 - zeta u)| = zeta/(1 - zeta u) at the right end.
        Ok((1.0 / lo).max(zeta / (1.0 - zeta * hi)))
    }
}

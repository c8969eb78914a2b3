//! Small numerical kernels shared by the model modules: boundary-snapping
//! ceilings, uniform grids, adaptive Gauss-Kronrod quadrature, golden-section
//! search, standard normal helpers, Wilson intervals and a counter-based
//! 64-bit mixer.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Relative distance to an integer below which a value is treated as that
/// integer before taking ceilings.
pub const SNAP_TOL: f64 = 1e-12;

/// Snaps `x` to the nearest integer when it lies within `SNAP_TOL` of it
/// (relative to `max(1, |x|)`).
pub fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Ceiling after snapping near-integers.
pub fn snapped_ceil(x: f64) -> f64 {
    snap(x).ceil()
}

/// Points `lo, lo + h', ..., hi` with the smallest uniform step `h' <= h`
/// that lands exactly on both endpoints. A degenerate range yields `[lo]`.
pub fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let steps = snapped_ceil((hi - lo) / step).max(1.0) as usize;
    (0..=steps)
        .map(|i| {
            if i == steps {
                hi
            } else {
                lo + (hi - lo) * (i as f64) / (steps as f64)
            }
        })
        .collect()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for nodes GK_NODES[1], [3], [5], [7].
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]` to an
/// absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 48;
    const MAX_INTERVALS: usize = 200_000;
    let total = b - a;
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, 0u32)];
    let mut sum = 0.0;
    let mut visited = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        visited += 1;
        if visited > MAX_INTERVALS {
            return Err(Error::Numerical("quadrature interval budget exhausted".into()));
        }
        let (value, err) = gauss_kronrod(&f, lo, hi);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let local_tol = abs_tol * ((hi - lo) / total).abs();
        if err <= local_tol.max(f64::EPSILON * value.abs()) {
            sum += value;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{lo}, {hi}] (error estimate {err:.3e})"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(sum)
}

/// Golden-section maximisation of a unimodal `f` on `[lo, hi]`; returns
/// `(argmax, max)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > x_tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal quantile; errors outside `(0, 1)`.
pub fn phi_inv(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Numerical(format!("normal quantile argument {u} outside (0, 1)")));
    }
    Ok(standard_normal().inverse_cdf(u))
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// 95% normal quantile used for all reported confidence intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// SplitMix64 finalizer: a bijection on `u64` with good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child key from a parent key and a counter. For a fixed parent
/// the map `counter -> key` is injective.
pub fn derive_key(parent: u64, counter: u64) -> u64 {
    mix64(mix64(parent) ^ counter)
}

/// Uniform `[0, 1)` value from the top 53 bits of a key.
pub fn unit_from_key(key: u64) -> f64 {
    (key >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Binary entropy in nats.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |y: f64| if y > 0.0 { -y * y.ln() } else { 0.0 };
    term(x) + term(1.0 - x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn snapping_only_touches_near_integers() {
        assert_eq!(snapped_ceil(6.000_000_000_000_001), 6.0);
        assert_eq!(snapped_ceil(5.999_999_999_999_999), 6.0);
        assert_eq!(snapped_ceil(5.5), 6.0);
        assert_eq!(snapped_ceil(5.000_001), 6.0);
    }

    #[test]
    fn grid_hits_both_endpoints() {
        let g = grid_points(-0.25, 0.25, 0.1);
        assert_eq!(g.first(), Some(&-0.25));
        assert_eq!(g.last(), Some(&0.25));
        assert!(g.windows(2).all(|w| w[1] - w[0] <= 0.1 + 1e-15));
        assert_eq!(grid_points(0.0, 0.0, 0.1), vec![0.0]);
    }

    #[test]
    fn quadrature_of_gaussian_density() {
        let s = 1.7;
        let pdf = |y: f64| (-(y * y) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let v = integrate(pdf, -20.0 * s, 20.0 * s, 1e-12).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        let second = integrate(|y| y * y * pdf(y), -20.0 * s, 20.0 * s, 1e-12).unwrap();
        assert_relative_eq!(second, s * s, epsilon = 1e-10);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-10);
        assert_relative_eq!(x, 0.3, epsilon = 1e-6);
        assert_relative_eq!(fx, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn normal_helpers() {
        assert_eq!(phi(0.0), 0.5);
        assert_relative_eq!(phi_inv(0.975).unwrap(), Z95, epsilon = 1e-9);
        assert!(phi_inv(1.0).is_err());
        assert!(phi_inv(0.0).is_err());
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100, Z95);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo0, _) = wilson_interval(0, 100, Z95);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn derived_keys_are_distinct() {
        let mut keys: Vec<u64> = (0..100_000).map(|i| derive_key(42, i)).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 100_000);
    }
}

//! Capacity of the query-dependent channel against dense-grid oracles with
//! closed-form (BSC) or trapezoid (AWGN) mutual information.

use std::f64::consts::{E, PI};

use approx::assert_abs_diff_eq;
use mtsearch_core::channels::{ChannelModel, SizeFunction};
use mtsearch_core::infodensity::{capacity, mean_info_density, DEFAULT_GRID, DEFAULT_REFINE_TOL};

fn hb(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
    }
}

fn bsc_mi(zeta: f64, a: f64, b: f64, p: f64) -> f64 {
    let eps = zeta * (a * p + b);
    hb(p * (1.0 - eps) + (1.0 - p) * eps) - hb(eps)
}

fn awgn_mi(sigma: f64, a: f64, b: f64, p: f64) -> f64 {
    let s = sigma * (a * p + b);
    let dens = |y: f64, mu: f64| (-0.5 * ((y - mu) / s).powi(2)).exp() / (s * (2.0 * PI).sqrt());
    let (lo, hi) = (-14.0 * s, 1.0 + 14.0 * s);
    let h = s / 16.0;
    let steps = ((hi - lo) / h).ceil() as usize;
    let h = (hi - lo) / steps as f64;
    let mut hy = 0.0;
    for i in 0..=steps {
        let y = lo + i as f64 * h;
        let py = p * dens(y, 1.0) + (1.0 - p) * dens(y, 0.0);
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        if py > 0.0 {
            hy -= w * py * py.ln();
        }
    }
    hy * h - 0.5 * (2.0 * PI * E * s * s).ln()
}

/// Grid maximum, then two zooms of the same density around the best point.
fn grid_oracle<F: Fn(f64) -> f64>(f: F, points: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (0.5, f64::NEG_INFINITY);
    for _ in 0..3 {
        let step = (hi - lo) / (points + 1) as f64;
        for i in 1..=points {
            let p = lo + i as f64 * step;
            let v = f(p);
            if v > best.1 {
                best = (p, v);
            }
        }
        lo = (best.0 - 2.0 * step).max(0.0);
        hi = (best.0 + 2.0 * step).min(1.0);
    }
    best
}

#[test]
fn constant_size_function_reduces_to_plain_bsc() {
    for (zeta, b) in [(0.2, 1.5), (0.1, 1.0), (0.45, 0.5), (0.3, 1.0)] {
        let ch = ChannelModel::bsc(zeta, SizeFunction::constant(b));
        let rep = capacity(&ch, DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap();
        let eps: f64 = zeta * b;
        assert_abs_diff_eq!(rep.capacity, 2f64.ln() - hb(eps), epsilon = 1e-9);
        assert_abs_diff_eq!(rep.smallest_maximizer().p, 0.5, epsilon = 1e-4);
    }
}

#[test]
fn reference_bsc_capacity_matches_dense_oracle() {
    let ch = ChannelModel::bsc(0.2, SizeFunction::new(2.0, 0.5));
    let rep = capacity(&ch, DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap();
    let (p_star, c) = grid_oracle(|p| bsc_mi(0.2, 2.0, 0.5, p), 100_000);
    assert_abs_diff_eq!(rep.capacity, c, epsilon = 1e-8);
    assert_abs_diff_eq!(rep.smallest_maximizer().p, p_star, epsilon = 1e-4);
    // The mean density agrees with the closed form away from the optimum too.
    for p in [0.05, 0.3, 0.77] {
        assert_abs_diff_eq!(
            mean_info_density(&ch, p).unwrap(),
            bsc_mi(0.2, 2.0, 0.5, p),
            epsilon = 1e-12
        );
    }
}

#[test]
fn reference_awgn_capacity_matches_dense_oracle() {
    let ch = ChannelModel::awgn(2.0, SizeFunction::new(2.0, 0.5));
    let rep = capacity(&ch, DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap();
    let (p_star, c) = grid_oracle(|p| awgn_mi(2.0, 2.0, 0.5, p), 2_000);
    assert_abs_diff_eq!(rep.capacity, c, epsilon = 1e-8);
    assert_abs_diff_eq!(rep.smallest_maximizer().p, p_star, epsilon = 1e-3);
    for p in [0.1, 0.5, 0.9] {
        assert_abs_diff_eq!(
            mean_info_density(&ch, p).unwrap(),
            awgn_mi(2.0, 2.0, 0.5, p),
            epsilon = 1e-9
        );
    }
}

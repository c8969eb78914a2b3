//! Trajectory enumeration against independent brute-force sweeps on finer
//! grids.

use std::collections::BTreeSet;

use mtsearch_core::kinematics::SlotSchedule;
use mtsearch_core::trajectories::{
    enumerate_first_slot, enumerate_later_slot, first_slot_size_bound, intersection_limit, later_slot_size_bound,
    verify_intersection_bound, DEFAULT_CAP, DEFAULT_RESOLUTION_FACTOR,
};

/// Triangle-wave reflection written from scratch.
fn oracle_position(s: f64, v: f64, t: u32) -> f64 {
    let u = (s + v * t as f64).rem_euclid(2.0);
    if u <= 1.0 {
        u
    } else {
        2.0 - u
    }
}

fn oracle_cell(x: f64, n: u32, m: u32) -> u32 {
    let cells = (n * m) as f64;
    let scaled = x * cells;
    let near = scaled.round();
    let c = if (scaled - near).abs() <= 1e-12 * scaled.abs().max(1.0) {
        near
    } else {
        scaled.ceil()
    };
    (c as u32).clamp(1, n * m)
}

fn oracle_set(n: u32, m: u32, v_plus: f64, factor: u32) -> BTreeSet<Vec<u32>> {
    let steps = (factor as u64) * (n as u64).pow(2) * m as u64;
    let vsteps = if v_plus == 0.0 {
        0
    } else {
        (2.0 * v_plus * steps as f64).round() as u64
    };
    let mut out = BTreeSet::new();
    for iv in 0..=vsteps {
        let v = if vsteps == 0 {
            0.0
        } else {
            -v_plus + 2.0 * v_plus * iv as f64 / vsteps as f64
        };
        for is in 0..=steps {
            let s = is as f64 / steps as f64;
            out.insert((1..=n).map(|t| oracle_cell(oracle_position(s, v, t), n, m)).collect());
        }
    }
    out
}

const NS: [u32; 3] = [2, 3, 4];
const MS: [u32; 3] = [1, 2, 3];
const VS: [f64; 3] = [0.0, 0.1, 0.25];

#[test]
fn first_slot_sets_match_finer_grid_oracle() {
    for n in NS {
        for m in MS {
            for vp in VS {
                let sched = SlotSchedule::constant_velocity(n, 1, vp).unwrap();
                let set = enumerate_first_slot(&sched, m, DEFAULT_RESOLUTION_FACTOR, DEFAULT_CAP).unwrap();
                let got: BTreeSet<Vec<u32>> = set.entries.iter().map(|e| e.cells.clone()).collect();
                assert_eq!(got.len(), set.len(), "duplicate entries for n={n} M={m} v+={vp}");
                let oracle = oracle_set(n, m, vp, 10 * DEFAULT_RESOLUTION_FACTOR);
                assert_eq!(got, oracle, "n={n} M={m} v+={vp}");
                assert!((set.len() as f64) <= first_slot_size_bound(n, m, vp, 1));
            }
        }
    }
}

#[test]
fn witnesses_reproduce_their_entries() {
    let sched = SlotSchedule::constant_velocity(4, 2, 0.25).unwrap();
    let set = enumerate_first_slot(&sched, 2, DEFAULT_RESOLUTION_FACTOR, 1e9).unwrap();
    for (e, w) in set.entries.iter().zip(&set.witnesses) {
        assert_eq!(&set.cells_of(w), e);
    }
    assert!(set.entries.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn later_slot_sets_match_dense_velocity_oracle() {
    for vp in VS {
        let sched = SlotSchedule::new(vec![3, 7], 1, vp).unwrap();
        for m in MS {
            let set = enumerate_later_slot(&[0.37], &sched, 1, m, DEFAULT_RESOLUTION_FACTOR, DEFAULT_CAP).unwrap();
            assert!((set.len() as f64) <= later_slot_size_bound(4, m, vp, 1));
            let got: BTreeSet<Vec<u32>> = set.entries.iter().map(|e| e.cells.clone()).collect();
            let velocity_oracle = |points: u64| -> BTreeSet<Vec<u32>> {
                (0..=points)
                    .map(|i| {
                        let v = if vp == 0.0 {
                            0.0
                        } else {
                            -vp + 2.0 * vp * i as f64 / points as f64
                        };
                        (1..=4)
                            .map(|t| oracle_cell(oracle_position(0.37, v, t), 4, m))
                            .collect()
                    })
                    .collect()
            };
            // Ten times the sweep density, then a much denser reference.
            let coarse = (2.0 * vp * (10 * DEFAULT_RESOLUTION_FACTOR * 16 * m) as f64).round() as u64;
            assert!(got.is_superset(&velocity_oracle(coarse.max(1))), "M={m} v+={vp}");
            assert_eq!(got, velocity_oracle(1_000_000), "M={m} v+={vp}");
        }
    }
}

#[test]
fn stationary_sets_have_no_confusable_overlap() {
    for n in NS {
        for m in MS {
            let sched = SlotSchedule::constant_velocity(n, 1, 0.0).unwrap();
            let set = enumerate_first_slot(&sched, m, DEFAULT_RESOLUTION_FACTOR, DEFAULT_CAP).unwrap();
            let rep = verify_intersection_bound(&set, 0.0);
            assert_eq!(rep.limit, 0);
            assert!(rep.passed(), "n={n} M={m}: {rep:?}");
        }
    }
}

#[test]
fn reflection_lets_confusable_pairs_exceed_the_limit() {
    // Near a wall, a path and its reflected counterpart share cells for more
    // than ceil(2 n v_+) steps while lying outside each other's neighbourhood.
    let sched = SlotSchedule::constant_velocity(3, 1, 0.1).unwrap();
    let set = enumerate_first_slot(&sched, 2, DEFAULT_RESOLUTION_FACTOR, DEFAULT_CAP).unwrap();
    let rep = verify_intersection_bound(&set, 0.1);
    assert_eq!(rep.limit, intersection_limit(3, 0.1));
    assert!(!rep.passed());
    let ex = rep.example.expect("violation example");
    assert!(ex.coincidences > rep.limit);
}

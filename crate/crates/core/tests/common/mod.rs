//! Independent oracles and dataset builders shared by the integration tests.
//!
//! Nothing here calls into the code paths it is used to check: the quantile
//! oracle bisects an erf power series, the PR oracle re-enumerates every
//! threshold with plain loops, and the full-comparison oracle compares each
//! pair through the public scalar kernel.

#![allow(dead_code)]

use std::collections::BTreeSet;

use epr_core::{
    cosine_similarity, DescriptorSet, GroundTruth, RouteEntry, SparseSimilarityMatrix,
    SyntheticSpec,
};

/// erf through `2/sqrt(pi) * exp(-x^2) * sum 2^n x^(2n+1) / (1*3*...*(2n+1))`.
/// All terms are positive, so there is no cancellation.
pub fn erf_series(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_series(-x);
    }
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

/// Standard normal CDF from the series.
pub fn phi_series(z: f64) -> f64 {
    0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2))
}

/// Inverse normal CDF by bisection on the series CDF.
pub fn quantile_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_series(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Full |DB| x |Q| similarity matrix, pair by pair.
pub fn brute_force_matrix(db: &DescriptorSet, query: &DescriptorSet) -> Vec<Vec<f64>> {
    query
        .rows()
        .map(|q| {
            db.rows()
                .map(|d| cosine_similarity(d, q).unwrap())
                .collect()
        })
        .collect()
}

/// PR points by exhaustive enumeration over every distinct threshold.
pub fn brute_force_single(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> Vec<(f64, f64)> {
    let mut has_hard = vec![false; s.q_count()];
    for &(_, q) in gt.hard() {
        has_hard[q] = true;
    }
    let denom = has_hard.iter().filter(|&&h| h).count() as f64;

    let mut best: Vec<Option<(usize, f64)>> = Vec::new();
    for q in 0..s.q_count() {
        let mut b: Option<(usize, f64)> = None;
        for &(db, v) in s.column(q).entries() {
            match b {
                None => b = Some((db, v)),
                Some((bdb, bv)) => {
                    if v > bv || (v == bv && db < bdb) {
                        b = Some((db, v));
                    }
                }
            }
        }
        best.push(b);
    }
    let thresholds = distinct_desc(best.iter().flatten().map(|b| b.1));
    thresholds
        .into_iter()
        .map(|th| {
            let (mut tp, mut fp, mut hits) = (0usize, 0usize, 0usize);
            for (q, b) in best.iter().enumerate() {
                if let Some((db, v)) = *b {
                    if v >= th {
                        if gt.is_soft(db, q) {
                            tp += 1;
                            if has_hard[q] {
                                hits += 1;
                            }
                        } else {
                            fp += 1;
                        }
                    }
                }
            }
            (hits as f64 / denom, tp as f64 / (tp + fp) as f64)
        })
        .collect()
}

pub fn brute_force_multi(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> Vec<(f64, f64)> {
    let denom = gt.hard().len() as f64;
    let entries: Vec<(usize, usize, f64)> = s.iter().collect();
    let thresholds = distinct_desc(entries.iter().map(|e| e.2));
    thresholds
        .into_iter()
        .map(|th| {
            let (mut tp, mut fp, mut hits) = (0usize, 0usize, 0usize);
            for &(db, q, v) in &entries {
                if v >= th {
                    if gt.is_soft(db, q) {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                    if gt.is_hard(db, q) {
                        hits += 1;
                    }
                }
            }
            (hits as f64 / denom, tp as f64 / (tp + fp) as f64)
        })
        .collect()
}

fn distinct_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out
}

/// Trapezoid with the first point held flat back to recall 0.
pub fn brute_force_auc(points: &[(f64, f64)]) -> f64 {
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(r, p) in points {
        area += match prev {
            None => r * p,
            Some((pr, pp)) => (r - pr) * (p + pp) / 2.0,
        };
        prev = Some((r, p));
    }
    area
}

/// Non-robust normal fit: mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn places(range: std::ops::Range<usize>) -> impl Iterator<Item = RouteEntry> {
    range.map(RouteEntry::Place)
}

/// Straight traversal of `n` places, database and query alike.
pub fn straight_spec(n: usize, dim: usize, noise: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_places: n,
        dim,
        db_route: (0..n).collect(),
        query_route: places(0..n).collect(),
        condition_noise_sigma: noise,
        rng_seed: seed,
    }
}

/// Database visits 50 places twice; the query drives the same loop ten
/// times (500 frames).
pub fn loop_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_places: 50,
        dim: 256,
        db_route: (0..50).chain(0..50).collect(),
        query_route: (0..10).flat_map(|_| places(0..50)).collect(),
        condition_noise_sigma: 0.05,
        rng_seed: 4,
    }
}

/// 1000 database frames: 800 places with the first 200 revisited; the
/// query follows the same route.
pub fn sparsity_spec() -> SyntheticSpec {
    let route: Vec<usize> = (0..800).chain(0..200).collect();
    SyntheticSpec {
        num_places: 800,
        dim: 256,
        query_route: route.iter().map(|&p| RouteEntry::Place(p)).collect(),
        db_route: route,
        condition_noise_sigma: 0.05,
        rng_seed: 6,
    }
}

/// 100 exploration frames, then 200 frames of the database route.
pub fn exploration_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_places: 300,
        dim: 256,
        db_route: (0..300).collect(),
        query_route: std::iter::repeat_n(RouteEntry::Explore, 100)
            .chain(places(50..250))
            .collect(),
        condition_noise_sigma: 0.05,
        rng_seed: 7,
    }
}

/// Hard match of query `q`'s best evaluated pair.
pub fn best_is_hard(s: &SparseSimilarityMatrix, gt: &GroundTruth, q: usize) -> bool {
    s.column(q).best().is_some_and(|(db, _)| gt.is_hard(db, q))
}

/// Set of evaluated database indices of a column.
pub fn evaluated(s: &SparseSimilarityMatrix, q: usize) -> BTreeSet<usize> {
    s.column(q).entries().iter().map(|e| e.0).collect()
}

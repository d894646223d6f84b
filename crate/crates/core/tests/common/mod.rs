//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the crate's algorithms.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frames(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimum accumulated cost over every monotone path from `(1,1)` (closed
/// start) or any `(1,j)` (open start) to `(m,n)`, found by exhaustive
/// enumeration. `cost[i][j]` is the 0-based local cost.
pub fn brute_force_dtw(cost: &[Vec<f64>], open: bool) -> f64 {
    let m = cost.len();
    let n = cost[0].len();
    fn walk(cost: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64, open: bool) {
        // walks backwards from (i, j) towards the first row
        let acc = acc + cost[i][j];
        if i == 0 && (open || j == 0) {
            *best = best.min(acc);
        }
        if i > 0 && j > 0 {
            walk(cost, i - 1, j - 1, acc, best, open);
        }
        if j > 0 {
            walk(cost, i, j - 1, acc, best, open);
        }
        if i > 0 {
            walk(cost, i - 1, j, acc, best, open);
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, m - 1, n - 1, 0.0, &mut best, open);
    best
}

/// Full `(m+1) x (n+1)` accumulation matrix; returns `M(m, k)` for `k = 1..=n`.
pub fn full_matrix_bottom_row(cost: &[Vec<f64>], open: bool) -> Vec<f64> {
    let m = cost.len();
    let n = cost[0].len();
    let mut d = vec![vec![f64::INFINITY; n + 1]; m + 1];
    if open {
        for cell in d[0].iter_mut() {
            *cell = 0.0;
        }
    } else {
        d[0][0] = 0.0;
    }
    for j in 1..=n {
        for i in 1..=m {
            let best = d[i - 1][j - 1].min(d[i][j - 1]).min(d[i - 1][j]);
            d[i][j] = cost[i - 1][j - 1] + best;
        }
    }
    (1..=n).map(|k| d[m][k]).collect()
}

/// Sum of local costs along a 1-based path.
pub fn path_cost(cost: &[Vec<f64>], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| cost[i - 1][j - 1]).sum()
}

pub fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Jarvis march. Returns the set of strict hull vertices (collinear boundary
/// points excluded).
pub fn gift_wrap(points: &[[f64; 2]]) -> BTreeSet<(u64, u64)> {
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut uniq: Vec<[f64; 2]> = Vec::new();
    for &p in points {
        if !uniq.iter().any(|q| key(*q) == key(p)) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return uniq.into_iter().map(key).collect();
    }
    let start = *uniq
        .iter()
        .min_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
        .unwrap();
    let mut hull = BTreeSet::new();
    let mut current = start;
    loop {
        hull.insert(key(current));
        let mut next = if key(uniq[0]) == key(current) { uniq[1] } else { uniq[0] };
        for &p in &uniq {
            if key(p) == key(current) {
                continue;
            }
            let c = cross(current, next, p);
            // take the most clockwise point; on ties the farthest one
            if c < 0.0 || (c == 0.0 && dist2(current, p) > dist2(current, next)) {
                next = p;
            }
        }
        current = next;
        if key(current) == key(start) || hull.len() > uniq.len() {
            break;
        }
    }
    hull
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Half-plane test against a counter-clockwise convex polygon.
pub fn in_convex_ccw(poly: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let len = dist2(a, b).sqrt();
        cross(a, b, p) / len >= -tol
    })
}

/// Polygon signed area; positive for counter-clockwise order.
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

pub fn is_convex_ccw(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    n < 3 || (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) > 0.0)
}

/// Mixture membership computed with a general linear solve instead of a
/// Cholesky factor.
pub fn naive_gmm_membership(weights: &[f64], means: &[Vec<f64>], covs: &[Vec<Vec<f64>>], q: &[f64]) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((w, mu), cov)| w * (-0.5 * quad_form(cov, mu, q)).exp())
        .sum()
}

/// `(q - mu)^T cov^-1 (q - mu)` via LU.
pub fn quad_form(cov: &[Vec<f64>], mu: &[f64], q: &[f64]) -> f64 {
    let d = mu.len();
    let a = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let diff = DVector::from_iterator(d, q.iter().zip(mu).map(|(a, b)| a - b));
    let x = a.lu().solve(&diff).expect("invertible covariance");
    diff.dot(&x)
}

/// Random symmetric positive-definite matrix `A A^T + s I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Jaccard overlap of frame index sets after removing the Don't-Care window
/// around every truth run, computed by direct set construction.
pub fn overlap_by_sets(truth: &[bool], pred: &[bool], dc: usize) -> f64 {
    let n = truth.len();
    let mut masked = BTreeSet::new();
    let mut t = 0;
    while t < n {
        if !truth[t] {
            t += 1;
            continue;
        }
        let b = t;
        while t + 1 < n && truth[t + 1] {
            t += 1;
        }
        let e = t;
        for k in 0..n as i64 {
            let (bi, ei, di) = (b as i64, e as i64, dc as i64);
            if dc > 0 && ((k >= bi - di && k < bi + di) || (k > ei - di && k <= ei + di)) {
                masked.insert(k as usize);
            }
        }
        t += 1;
    }
    let g: BTreeSet<usize> = (0..n).filter(|&k| truth[k] && !masked.contains(&k)).collect();
    let p: BTreeSet<usize> = (0..n).filter(|&k| pred[k] && !masked.contains(&k)).collect();
    let union: BTreeSet<_> = g.union(&p).collect();
    if union.is_empty() {
        1.0
    } else {
        g.intersection(&p).count() as f64 / union.len() as f64
    }
}

/// Average ranks (1 = best) of one row, ties sharing the mean rank.
pub fn average_ranks(scores: &[f64], higher_is_better: bool) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| {
            let better = scores
                .iter()
                .filter(|&&o| if higher_is_better { o > s } else { o < s })
                .count();
            let equal = scores.iter().filter(|&&o| o == s).count();
            better as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Offline begin-end spotter over a precomputed `m x n` local-cost table.
///
/// Each search restarts a full open-start matrix from scratch. Moves are
/// chosen diagonal, then left, then up on ties. Returns 0-based inclusive
/// `(begin, end, cost)` triples.
pub fn offline_spot(cost: &[Vec<f64>], beta: f64, strict: bool) -> Vec<(usize, usize, f64)> {
    let m = cost.len();
    let n = cost[0].len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let width = n - start;
        let mut d = vec![vec![f64::INFINITY; width + 1]; m + 1];
        // 0 = diagonal, 1 = left, 2 = up
        let mut mv = vec![vec![0u8; width + 1]; m + 1];
        d[0].iter_mut().for_each(|c| *c = 0.0);
        let mut hit = None;
        for j in 1..=width {
            for i in 1..=m {
                let cands = [d[i - 1][j - 1], d[i][j - 1], d[i - 1][j]];
                let mut best = 0;
                for k in 1..3 {
                    if cands[k] < cands[best] {
                        best = k;
                    }
                }
                d[i][j] = cost[i - 1][start + j - 1] + cands[best];
                mv[i][j] = best as u8;
            }
            if hit.is_none() && d[m][j] < beta {
                hit = Some(j);
                if strict {
                    break;
                }
            } else if let Some(h) = hit {
                if d[m][j] < d[m][h] {
                    hit = Some(j);
                } else {
                    break;
                }
            }
        }
        let Some(end) = hit else { break };
        let (mut i, mut j) = (m, end);
        loop {
            match mv[i][j] {
                0 => {
                    if i == 1 {
                        break;
                    }
                    i -= 1;
                    j -= 1;
                }
                1 => j -= 1,
                _ => {
                    if i == 1 {
                        break;
                    }
                    i -= 1;
                }
            }
        }
        out.push((start + j - 1, start + end - 1, d[m][end]));
        start += end;
    }
    out
}

mod common;

use common::*;
use ocdtw_core::dtw::{dtw_align, dtw_align_euclidean};
use ocdtw_core::{CostMatrix, Sequence, StartMode};
use rand::Rng;

fn seq(frames: &[Vec<f64>]) -> Sequence {
    Sequence::new("s", frames).unwrap()
}

fn local_costs(reference: &[Vec<f64>], query: &[Vec<f64>]) -> Vec<Vec<f64>> {
    reference
        .iter()
        .map(|r| query.iter().map(|q| euclid(r, q)).collect())
        .collect()
}

#[test]
fn closed_start_matches_exhaustive_enumeration() {
    let mut rng = rng(11);
    for _ in 0..1000 {
        let (m, n, d) = (
            rng.random_range(1..=6),
            rng.random_range(1..=6),
            rng.random_range(1..=3),
        );
        let r = random_frames(&mut rng, m, d);
        let q = random_frames(&mut rng, n, d);
        let cost = local_costs(&r, &q);
        let a = dtw_align_euclidean(&seq(&r), &seq(&q)).unwrap();
        let brute = brute_force_dtw(&cost, false);
        assert!(
            (a.accumulated - brute).abs() <= 1e-12 * brute.max(1.0),
            "{} vs {brute}",
            a.accumulated
        );
        assert!(a.path.is_valid(m, n, StartMode::Closed));
        assert!((path_cost(&cost, a.path.steps()) - a.accumulated).abs() <= 1e-12 * brute.max(1.0));
        assert_eq!(a.normalized, a.accumulated / a.path.tau() as f64);
    }
}

#[test]
fn open_start_matches_exhaustive_enumeration() {
    let mut rng = rng(12);
    for _ in 0..1000 {
        let (m, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..3.0)).collect())
            .collect();
        let mut matrix = CostMatrix::open(m).unwrap();
        for j in 0..n {
            let col: Vec<f64> = cost.iter().map(|row| row[j]).collect();
            matrix.push_column(&col).unwrap();
        }
        let brute = brute_force_dtw(&cost, true);
        assert!((matrix.bottom() - brute).abs() <= 1e-12 * brute.max(1.0));
        let path = matrix.backtrack(n).unwrap();
        assert!(path.is_valid(m, n, StartMode::Open));
        assert!((path_cost(&cost, path.steps()) - brute).abs() <= 1e-12 * brute.max(1.0));
    }
}

#[test]
fn streaming_columns_equal_full_matrix() {
    let mut rng = rng(13);
    for trial in 0..200 {
        let (m, n) = (rng.random_range(1..=12), rng.random_range(1..=40));
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        for open in [false, true] {
            let mode = if open { StartMode::Open } else { StartMode::Closed };
            let mut matrix = CostMatrix::new(m, mode, Some(3)).unwrap();
            let streamed: Vec<f64> = (0..n)
                .map(|j| {
                    let col: Vec<f64> = cost.iter().map(|row| row[j]).collect();
                    matrix.push_column(&col).unwrap()
                })
                .collect();
            assert_eq!(
                streamed,
                full_matrix_bottom_row(&cost, open),
                "trial {trial} open={open}"
            );
        }
    }
}

#[test]
fn reset_restarts_as_a_fresh_open_matrix() {
    let mut rng = rng(14);
    for _ in 0..50 {
        let m = rng.random_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..20).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let mut matrix = CostMatrix::open(m).unwrap();
        for j in 0..7 {
            let col: Vec<f64> = cost.iter().map(|row| row[j]).collect();
            matrix.push_column(&col).unwrap();
        }
        matrix.reset();
        let tail: Vec<Vec<f64>> = cost.iter().map(|row| row[7..].to_vec()).collect();
        let expected = full_matrix_bottom_row(&tail, true);
        for (k, j) in (7..20).enumerate() {
            let col: Vec<f64> = cost.iter().map(|row| row[j]).collect();
            assert_eq!(matrix.push_column(&col).unwrap(), expected[k]);
        }
        // column numbering keeps counting from the start of the stream
        assert_eq!(matrix.cols(), 20);
        let path = matrix.backtrack(20).unwrap();
        assert!(path.first().unwrap().1 >= 8);
    }
}

#[test]
fn custom_frame_cost_is_used() {
    let r = seq(&[vec![0.0], vec![1.0], vec![2.0]]);
    let q = seq(&[vec![0.0], vec![2.0]]);
    let a = dtw_align(&r, &q, |a, b| (a[0] - b[0]).abs() * 10.0).unwrap();
    let b = dtw_align_euclidean(&r, &q).unwrap();
    assert_eq!(a.accumulated, 10.0 * b.accumulated);
    assert_eq!(a.path, b.path);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let r = seq(&[vec![0.0, 1.0]]);
    let q = seq(&[vec![0.0]]);
    assert!(dtw_align_euclidean(&r, &q).is_err());
}

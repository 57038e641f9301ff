#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectif_core::measure::DiscreteMeasure;

/// Uniform random atoms in `[-1,1]^{n+1}` with weights in `[0.1, 2)`.
pub fn cloud(n: usize, count: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n + 1;
    let coords: Vec<f64> = (0..count * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.1..2.0)).collect();
    DiscreteMeasure::from_flat(n, coords, weights).unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dense tableau simplex for `max cᵀx` subject to `Ax ≤ b`, `x ≥ 0`, `b ≥ 0`.
/// Bland's rule, so it terminates on degenerate problems.
pub fn simplex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let w = n + m + 1;
    let mut t = vec![vec![0.0; w]; m + 1];
    for i in 0..m {
        assert!(b[i] >= 0.0, "origin must be feasible");
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][w - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(col) = (0..n + m).find(|&j| t[m][j] < -1e-12) {
        let mut row = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][col] > 1e-12 {
                let r = t[i][w - 1] / t[i][col];
                if r < best - 1e-15 || (r <= best + 1e-15 && row.is_none_or(|k: usize| basis[i] < basis[k])) {
                    best = r;
                    row = Some(i);
                }
            }
        }
        let row = row.expect("bounded LP");
        let p = t[row][col];
        for v in t[row].iter_mut() {
            *v /= p;
        }
        let pivot = t[row].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != row && r[col] != 0.0 {
                let f = r[col];
                for (x, y) in r.iter_mut().zip(&pivot) {
                    *x -= f * y;
                }
            }
        }
        basis[row] = col;
    }
    t[m][w - 1]
}

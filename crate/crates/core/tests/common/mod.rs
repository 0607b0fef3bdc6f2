//! Shared helpers for the integration suites. The oracles here are written
//! from scratch (Gaussian elimination, exhaustive enumeration, Box-Muller
//! sampling) so they stay independent of the library's own solvers.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 1e-300 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Random design with exactly orthonormal columns in the `X^T X / n = I`
/// sense: Gram-Schmidt (two passes) on Gaussian columns, scaled by `√n`.
pub fn orthonormal_design(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    assert!(n >= p);
    'outer: loop {
        let mut cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| gaussian(rng)).collect())
            .collect();
        for j in 0..p {
            for _pass in 0..2 {
                for i in 0..j {
                    let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a * b).sum();
                    let prev = cols[i].clone();
                    for (v, w) in cols[j].iter_mut().zip(prev) {
                        *v -= dot * w;
                    }
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue 'outer;
            }
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
        let scale = (n as f64).sqrt();
        let mut x = Array2::<f64>::zeros((n, p));
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                x[[i, j]] = scale * v;
            }
        }
        return x;
    }
}

/// Gaussian elimination with partial pivoting; `None` on (near) singular
/// systems.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for i in 0..n {
        let mut pivot = i;
        for r in (i + 1)..n {
            if a[r][i].abs() > a[pivot][i].abs() {
                pivot = r;
            }
        }
        if a[pivot][i].abs() < 1e-12 {
            return None;
        }
        a.swap(i, pivot);
        b.swap(i, pivot);
        for r in (i + 1)..n {
            let factor = a[r][i] / a[i][i];
            for c in i..n {
                a[r][c] -= factor * a[i][c];
            }
            b[r] -= factor * b[i];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for c in (i + 1)..n {
            sum -= a[i][c] * x[c];
        }
        x[i] = sum / a[i][i];
    }
    Some(x)
}

/// Least-squares fit restricted to `support`, returning the full-length
/// coefficient vector and the loss `‖y − Xθ‖² / (2n)`.
pub fn least_squares_on_support(
    x: &Array2<f64>,
    y: &Array1<f64>,
    support: &[usize],
) -> Option<(Vec<f64>, f64)> {
    let n = x.nrows();
    let s = support.len();
    let mut theta = vec![0.0; x.ncols()];
    if s > 0 {
        let mut gram = vec![vec![0.0; s]; s];
        let mut rhs = vec![0.0; s];
        for (a, &ja) in support.iter().enumerate() {
            for (b, &jb) in support.iter().enumerate() {
                gram[a][b] = x
                    .column(ja)
                    .iter()
                    .zip(x.column(jb))
                    .map(|(u, v)| u * v)
                    .sum();
            }
            rhs[a] = x.column(ja).iter().zip(y.iter()).map(|(u, v)| u * v).sum();
        }
        let coef = gauss_solve(gram, rhs)?;
        for (&j, &c) in support.iter().zip(&coef) {
            theta[j] = c;
        }
    }
    let mut sse = 0.0;
    for i in 0..n {
        let mut pred = 0.0;
        for &j in support {
            pred += x[[i, j]] * theta[j];
        }
        let r = y[i] - pred;
        sse += r * r;
    }
    Some((theta, sse / (2.0 * n as f64)))
}

fn combinations_rec(
    start: usize,
    p: usize,
    size: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    for j in start..p {
        current.push(j);
        combinations_rec(j + 1, p, size, current, out);
        current.pop();
    }
}

pub fn combinations(p: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    combinations_rec(0, p, size, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive best-subset search over all supports of size at most
/// `max_size`: the smallest support (then lexicographically first) whose
/// restricted least-squares loss is within `tol` of the global minimum.
pub fn best_subset(
    x: &Array2<f64>,
    y: &Array1<f64>,
    max_size: usize,
    tol: f64,
) -> (BTreeSet<usize>, f64) {
    let p = x.ncols();
    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    for size in 0..=max_size.min(p) {
        for support in combinations(p, size) {
            if let Some((_, loss)) = least_squares_on_support(x, y, &support) {
                entries.push((support, loss));
            }
        }
    }
    let min_loss = entries
        .iter()
        .map(|(_, l)| *l)
        .fold(f64::INFINITY, f64::min);
    // entries are generated smallest-size first, lexicographic within size
    for (support, loss) in &entries {
        if *loss <= min_loss + tol {
            return (support.iter().copied().collect(), *loss);
        }
    }
    unreachable!("at least the empty support is always present");
}

/// Best subset at exactly the given size, minimizing the restricted loss.
pub fn best_subset_exact_size(
    x: &Array2<f64>,
    y: &Array1<f64>,
    size: usize,
) -> (BTreeSet<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for support in combinations(x.ncols(), size) {
        if let Some((_, loss)) = least_squares_on_support(x, y, &support) {
            if best.as_ref().map_or(true, |(_, b)| loss < *b) {
                best = Some((support, loss));
            }
        }
    }
    let (support, loss) = best.expect("some support of the requested size is solvable");
    (support.into_iter().collect(), loss)
}

/// Rademacher `±1` sample matrix (independent fair spins).
pub fn rademacher_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> greedygm::ising::SampleMatrix {
    let rows: Vec<Vec<i8>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect()
        })
        .collect();
    greedygm::ising::SampleMatrix::from_rows(rows).unwrap()
}

//! Lowest eigenpairs of a symmetric tridiagonal matrix by Sturm bisection
//! and inverse iteration.

use crate::error::{Error, Result};

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let o2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - x - if i == 0 { 0.0 } else { o2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solve `(T - σI) x = b` by Gaussian elimination with partial pivoting.
fn shifted_solve(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // rows hold entries at columns i, i+1, i+2 after pivoting
    let mut a0: Vec<f64> = diag.iter().map(|d| d - sigma).collect();
    let mut a1: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut a2 = vec![0.0; n];
    let mut sub: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut rhs = b.to_vec();
    let tiny = f64::EPSILON * diag.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n.saturating_sub(1) {
        // candidate rows: i (a0[i], a1[i], a2[i]) and i+1 (sub[i], a0[i+1], a1[i+1])
        if sub[i].abs() > a0[i].abs() {
            let (r0, r1, r2) = (sub[i], a0[i + 1], a1[i + 1]);
            let (s0, s1, s2) = (a0[i], a1[i], a2[i]);
            a0[i] = r0;
            a1[i] = r1;
            a2[i] = r2;
            sub[i] = s0;
            a0[i + 1] = s1;
            a1[i + 1] = s2;
            rhs.swap(i, i + 1);
        }
        if a0[i].abs() < tiny {
            a0[i] = tiny;
        }
        let factor = sub[i] / a0[i];
        a0[i + 1] -= factor * a1[i];
        a1[i + 1] -= factor * a2[i];
        rhs[i + 1] -= factor * rhs[i];
    }
    if a0[n - 1].abs() < tiny {
        a0[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = rhs[i];
        if i + 1 < n {
            v -= a1[i] * x[i + 1];
        }
        if i + 2 < n {
            v -= a2[i] * x[i + 2];
        }
        x[i] = v / a0[i];
    }
    x
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// The `count` smallest eigenpairs, eigenvalues ascending and eigenvectors
/// orthonormal in the Euclidean inner product.
pub fn lowest_eigenpairs(diag: &[f64], off: &[f64], count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = diag.len();
    if count > n {
        return Err(Error::EigenSolve(format!("requested {count} eigenpairs of a {n}×{n} matrix")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
    for k in 0..count {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sturm_count(diag, off, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 4.0 * f64::EPSILON * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let lambda = 0.5 * (a + b);
        if !lambda.is_finite() {
            return Err(Error::EigenSolve(format!("bisection failed for eigenvalue {k}")));
        }
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 + k * 104729) % 97) as f64 / 97.0).collect();
        normalize(&mut v);
        let sigma = lambda + 1e-10 * lambda.abs().max(1.0);
        for _ in 0..4 {
            v = shifted_solve(diag, off, sigma, &v);
            for (_, prev) in &pairs {
                let dot: f64 = prev.iter().zip(&v).map(|(p, x)| p * x).sum();
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
            }
            normalize(&mut v);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::EigenSolve(format!("inverse iteration diverged for eigenvalue {k}")));
        }
        pairs.push((lambda, v));
    }
    Ok(pairs)
}

//! Small dense Riccati and Lyapunov solvers for single-input linear systems.
//! Matrices are row-major `n x n`; input matrices are `n x 1` columns.

use crate::error::{Error, Result};

pub(crate) fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

pub(crate) fn mat_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
}

pub(crate) fn quad_form(p: &[f64], x: &[f64]) -> f64 {
    x.iter().zip(mat_vec(p, x)).map(|(a, b)| a * b).sum()
}

/// Closed-loop matrix `A - B K` for a row gain `K`.
pub fn closed_loop(a: &[f64], b: &[f64], k: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut out = a.to_vec();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] -= b[i] * k[j];
        }
    }
    out
}

/// Per-step cost matrix `Q + K^T R K` of the feedback law `u = -K x`.
pub fn feedback_cost(q: &[f64], r: f64, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut out = q.to_vec();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] += r * k[i] * k[j];
        }
    }
    out
}

/// Infinite-horizon discrete LQR for `x' = A x + B u` with cost
/// `x^T Q x + r u^2`, by fixed-point iteration of the Riccati recursion.
/// Returns the row gain `K` (control `u = -K x`) and the cost matrix `P`.
pub fn dlqr(a: &[f64], b: &[f64], q: &[f64], r: f64, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = b.len();
    let at = transpose(a, n);
    let mut p = q.to_vec();
    for _ in 0..1_000_000 {
        let pb = mat_vec(&p, b);
        let denom = r + b.iter().zip(&pb).map(|(x, y)| x * y).sum::<f64>();
        // B^T P A as a row vector
        let bpa: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pb[i] * a[i * n + j]).sum()).collect();
        let apa = mat_mul(&at, &mat_mul(&p, a, n), n);
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = q[i * n + j] + apa[i * n + j] - bpa[i] * bpa[j] / denom;
            }
        }
        // Symmetrize to stop round-off from accumulating in the skew part.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (next[i * n + j] + next[j * n + i]);
                next[i * n + j] = m;
                next[j * n + i] = m;
            }
        }
        let diff = next.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if !diff.is_finite() || next.iter().any(|x| !x.is_finite()) {
            break;
        }
        p = next;
        if diff < tol {
            let pb = mat_vec(&p, b);
            let denom = r + b.iter().zip(&pb).map(|(x, y)| x * y).sum::<f64>();
            let k = (0..n).map(|j| (0..n).map(|i| pb[i] * a[i * n + j]).sum::<f64>() / denom).collect();
            return Ok((k, p));
        }
    }
    Err(Error::InvalidParameter("Riccati iteration did not converge".into()))
}

/// Solves `P = C + gamma * F^T P F` by fixed-point iteration, where `F` is a
/// closed-loop matrix and `C` the per-step cost.
pub fn discounted_lyapunov(f: &[f64], c: &[f64], gamma: f64, tol: f64) -> Result<Vec<f64>> {
    let n = (c.len() as f64).sqrt() as usize;
    let ft = transpose(f, n);
    let mut p = c.to_vec();
    for _ in 0..10_000_000 {
        let next: Vec<f64> = mat_mul(&ft, &mat_mul(&p, f, n), n).iter().zip(c).map(|(x, ci)| ci + gamma * x).collect();
        let diff = next.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if !diff.is_finite() || next.iter().any(|x| !x.is_finite()) {
            break;
        }
        p = next;
        if diff < tol {
            return Ok(p);
        }
    }
    Err(Error::InvalidParameter("Lyapunov iteration diverged".into()))
}

/// Undiscounted cost matrix of `steps` steps: `sum_{t<steps} (F^T)^t C F^t`.
pub fn finite_horizon_cost(f: &[f64], c: &[f64], steps: usize) -> Vec<f64> {
    let n = (c.len() as f64).sqrt() as usize;
    let ft = transpose(f, n);
    let mut p = vec![0.0; n * n];
    for _ in 0..steps {
        p = mat_mul(&ft, &mat_mul(&p, f, n), n).iter().zip(c).map(|(x, ci)| ci + x).collect();
    }
    p
}

//! Log-Cholesky coordinates of SPD matrices.
//!
//! Coordinates list the lower triangle of `L` row by row; entry `(i, j)`
//! with `j ≤ i` sits at `i(i+1)/2 + j`, and diagonal entries are stored as
//! `ln L_ii`. Matrices are dense row-major `n × n` slices.

use crate::error::{Error, Result};

#[inline]
fn idx(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Number of coordinates for an `n × n` matrix.
pub fn coord_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Lower-triangular factor `L` (row-major) from log-Cholesky coordinates.
pub fn cholesky_from_coords(n: usize, x: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            l[i * n + j] = x[idx(i, j)];
        }
        l[i * n + i] = x[idx(i, i)].exp();
    }
    l
}

/// `L Lᵀ` from log-Cholesky coordinates.
pub fn matrix_from_coords(n: usize, x: &[f64]) -> Vec<f64> {
    let l = cholesky_from_coords(n, x);
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    s
}

/// Cholesky factorisation of a symmetric positive definite matrix.
pub fn cholesky(n: usize, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: s.len(),
        });
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut v = s[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(v > 0.0) {
                    return Err(Error::Domain("matrix is not positive definite".into()));
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Log-Cholesky coordinates of a symmetric positive definite matrix.
pub fn coords_from_matrix(n: usize, s: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(n, s)?;
    let mut x = vec![0.0; coord_len(n)];
    for i in 0..n {
        for j in 0..i {
            x[idx(i, j)] = l[i * n + j];
        }
        x[idx(i, i)] = l[i * n + i].ln();
    }
    Ok(x)
}

/// `tr(L Lᵀ) = Σ_{j<i} l_ij² + Σ_i exp(2 d_i)`.
pub fn trace_from_coords(n: usize, x: &[f64]) -> f64 {
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..i {
            t += x[idx(i, j)] * x[idx(i, j)];
        }
        t += (2.0 * x[idx(i, i)]).exp();
    }
    t
}

/// Gradient of [`trace_from_coords`] with respect to the coordinates.
pub fn trace_gradient(n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..i {
            out[idx(i, j)] = 2.0 * x[idx(i, j)];
        }
        out[idx(i, i)] = 2.0 * (2.0 * x[idx(i, i)]).exp();
    }
}

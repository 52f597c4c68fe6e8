//! Row-major dense helpers for the small `d × d` matrices carried per node.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn identity(d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for k in 0..d {
        out[k * d + k] = 1.0;
    }
    out
}

/// `out = a · b` for `d × d` row-major matrices.
pub fn matmul(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    for r in 0..d {
        for c in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[r * d + k] * b[k * d + c];
            }
            out[r * d + c] = acc;
        }
    }
}

/// `out = a · v`.
pub fn matvec(a: &[f64], v: &[f64], d: usize, out: &mut [f64]) {
    for r in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += a[r * d + k] * v[k];
        }
        out[r] = acc;
    }
}

/// `a · c · aᵀ`.
pub fn congruence(a: &[f64], c: &[f64], d: usize) -> Vec<f64> {
    let mut ac = vec![0.0; d * d];
    matmul(a, c, d, &mut ac);
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for col in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += ac[r * d + k] * a[col * d + k];
            }
            out[r * d + col] = acc;
        }
    }
    out
}

pub fn sum_squares(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Frobenius distance of `a · b` from the identity.
pub fn inverse_defect(a: &[f64], b: &[f64], d: usize) -> f64 {
    let mut prod = vec![0.0; d * d];
    matmul(a, b, d, &mut prod);
    for k in 0..d {
        prod[k * d + k] -= 1.0;
    }
    sum_squares(&prod).sqrt()
}

/// Smallest eigenvalue of the symmetric part of a `d × d` matrix.
pub fn min_symmetric_eigenvalue(a: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_fn(d, d, |r, c| 0.5 * (a[r * d + c] + a[c * d + r]));
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

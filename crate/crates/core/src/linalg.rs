//! Dense least squares via Householder QR.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};

/// Relative threshold on |R_ii| below which the design is declared singular.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ||X b - y||` for a row-major `n x p` design matrix.
pub fn least_squares(design: &[f64], n: usize, p: usize, y: &[f64]) -> Result<Vec<f64>> {
    if design.len() != n * p {
        return Err(Error::SizeMismatch {
            expected: n * p,
            actual: design.len(),
        });
    }
    if y.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < p {
        return Err(Error::SingularFit);
    }
    let mut a = design.to_vec();
    let mut rhs = y.to_vec();
    let mut col_norm_max: f64 = 0.0;
    for j in 0..p {
        let norm = sqrt((0..n).map(|i| a[i * p + j] * a[i * p + j]).sum());
        col_norm_max = col_norm_max.max(norm);
    }
    if col_norm_max == 0.0 {
        return Err(Error::SingularFit);
    }

    let mut v = vec![0.0; n];
    for k in 0..p {
        let norm = sqrt((k..n).map(|i| a[i * p + k] * a[i * p + k]).sum());
        if norm <= RANK_TOL * col_norm_max {
            return Err(Error::SingularFit);
        }
        let alpha = if a[k * p + k] > 0.0 { -norm } else { norm };
        for i in k..n {
            v[i] = a[i * p + k];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let dot: f64 = (k..n).map(|i| v[i] * a[i * p + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                a[i * p + j] -= f * v[i];
            }
        }
        let dot: f64 = (k..n).map(|i| v[i] * rhs[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..n {
            rhs[i] -= f * v[i];
        }
    }

    // back substitution on the upper-triangular R
    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in k + 1..p {
            s -= a[k * p + j] * coef[j];
        }
        let diag = a[k * p + k];
        if abs(diag) <= RANK_TOL * col_norm_max {
            return Err(Error::SingularFit);
        }
        coef[k] = s / diag;
    }
    Ok(coef)
}

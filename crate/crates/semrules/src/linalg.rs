//! Dense Cholesky solve for the small symmetric positive-definite systems
//! produced by ridge regression normal equations.

use crate::{Error, Result};

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, k x k).
pub(crate) fn solve_spd(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let k = b.len();
    debug_assert_eq!(a.len(), k * k);

    // In-place lower-triangular Cholesky factor.
    let mut l = a.to_vec();
    for i in 0..k {
        for j in 0..=i {
            let mut sum = l[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Data(format!(
                        "matrix not positive definite at pivot {i} (value {sum})"
                    )));
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }

    // Forward substitution: L y = b.
    let mut x = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            x[i] -= l[i * k + p] * x[p];
        }
        x[i] /= l[i * k + i];
    }
    // Back substitution: L^T x = y.
    for i in (0..k).rev() {
        for p in (i + 1)..k {
            x[i] -= l[p * k + i] * x[p];
        }
        x[i] /= l[i * k + i];
    }
    Ok(x)
}

//! Small dense linear algebra for stationary distributions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

/// Solves `π P = π`, `Σ π = 1` for a row-stochastic `p` given as rows.
///
/// The last balance equation is replaced with the normalization, which
/// makes the solve exact for periodic chains. A (numerically) singular
/// system means the chain has no unique stationary distribution.
pub(crate) fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    if n == 0 {
        return Err(Error::NoUniqueStationary);
    }
    // Row i of the system: Σ_j π_j (P_{j i} - δ_{j i}) = 0.
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        for j in 0..n {
            row[j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    let mut pi = solve_augmented(a)?;
    for v in &mut pi {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    if pi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::NoUniqueStationary);
    }
    Ok(pi)
}

/// Gaussian elimination with partial pivoting on an `n × (n+1)` system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, libm::fabs(a[r][col])))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs < PIVOT_EPS {
            return Err(Error::NoUniqueStationary);
        }
        a.swap(col, pivot_row);
        let pivot = a[col][col];
        for r in col + 1..n {
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..=n {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = a[r][n];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}

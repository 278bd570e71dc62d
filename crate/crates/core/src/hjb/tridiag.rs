use crate::error::{Error, Result};

/// Solve a tridiagonal system in place with the Thomas algorithm.
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`;
/// `lower[0]` and `upper[n-1]` are ignored. `diag` and `rhs` are
/// overwritten, the solution is left in `rhs`.
pub fn solve_in_place(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        let piv = diag[i - 1];
        if !(piv.abs() > 1e-300) || !piv.is_finite() {
            return Err(Error::SingularSystem { row: i - 1 });
        }
        let m = lower[i] / piv;
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    let last = diag[n - 1];
    if !(last.abs() > 1e-300) || !last.is_finite() {
        return Err(Error::SingularSystem { row: n - 1 });
    }
    rhs[n - 1] /= last;
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
    Ok(())
}

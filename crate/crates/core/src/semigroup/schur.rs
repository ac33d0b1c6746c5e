//! Triangular-factor workhorses: complex Schur form, the principal matrix
//! square root, and a one-sided Lyapunov solver, all for desk-scale dense
//! matrices.

use crate::error::{Error, Result};
use crate::{CMat, CVec};

/// Complex Schur decomposition A = Q T Q^*, T upper triangular.
pub fn complex_schur(a: &CMat) -> Result<(CMat, CMat)> {
    if !a.is_square() {
        return Err(Error::invalid("Schur form needs a square matrix"));
    }
    let schur = a.clone().try_schur(1e-14, 10_000).ok_or_else(|| {
        Error::singular("Schur iteration failed to converge")
    })?;
    let (q, t) = schur.unpack();
    Ok((q, t))
}

/// Principal square root of an upper-triangular matrix by the recurrence on
/// superdiagonals.  Eigenvalues on the closed negative real axis (the branch
/// cut, zero included) are rejected.
fn sqrt_triangular(t: &CMat) -> Result<CMat> {
    let n = t.nrows();
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0f64, f64::max);
    let mut s = CMat::zeros(n, n);
    for i in 0..n {
        let l = t[(i, i)];
        if l.im.abs() <= 1e-14 * scale.max(1e-300) && l.re <= 0.0 {
            return Err(Error::domain(format!(
                "spectrum touches (-inf, 0]: eigenvalue {:.6e}{:+.6e}i",
                l.re, l.im
            )));
        }
        s[(i, i)] = l.sqrt(); // principal branch
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut acc = t[(i, j)];
            for k in i + 1..j {
                acc -= s[(i, k)] * s[(k, j)];
            }
            let denom = s[(i, i)] + s[(j, j)];
            if denom.norm() <= 1e-300 {
                return Err(Error::singular("square-root recurrence hit a zero divisor"));
            }
            s[(i, j)] = acc / denom;
        }
    }
    Ok(s)
}

/// Principal square root of a general matrix via its Schur form.
pub fn sqrt_principal(a: &CMat) -> Result<CMat> {
    let (q, t) = complex_schur(a)?;
    let s = sqrt_triangular(&t)?;
    Ok(&q * s * q.adjoint())
}

/// Solve B^* X + X B = W column-by-column through the Schur form of B.
/// Solvable when no two eigenvalues of B are reflections of each other
/// through the imaginary axis (always true for accretive spectra).
pub fn lyapunov_adjoint_solve(b: &CMat, w: &CMat) -> Result<CMat> {
    if b.nrows() != w.nrows() || !b.is_square() || !w.is_square() {
        return Err(Error::invalid("Lyapunov solve needs matching square matrices"));
    }
    let n = b.nrows();
    let (q, t) = complex_schur(b)?;
    let cmat = q.adjoint() * w * &q;
    let mut y = CMat::zeros(n, n);
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0f64, f64::max);
    for k in 0..n {
        // (T^* + t_kk I) y_k = c_k - sum_{j<k} t_{jk} y_j, lower triangular solve
        let mut rhs = CVec::from_iterator(n, (0..n).map(|i| cmat[(i, k)]));
        for j in 0..k {
            let t_jk = t[(j, k)];
            for i in 0..n {
                rhs[i] -= t_jk * y[(i, j)];
            }
        }
        for i in 0..n {
            let mut acc = rhs[i];
            for l in 0..i {
                acc -= t[(l, i)].conj() * y[(l, k)];
            }
            let denom = t[(i, i)].conj() + t[(k, k)];
            if denom.norm() <= 1e-14 * scale.max(1e-300) {
                return Err(Error::singular(
                    "Lyapunov spectra overlap across the imaginary axis",
                ));
            }
            y[(i, k)] = acc / denom;
        }
    }
    Ok(&q * y * q.adjoint())
}

//! Thin wrappers over `faer` for the handful of dense kernels used here.
//!
//! `faer` returns singular values in descending order; everything in this
//! crate indexes them ascending, so the reordering happens once, here.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Par};

use crate::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(nrows: usize, ncols: usize) -> CMat {
    Mat::zeros(nrows, ncols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn from_real(m: &[Vec<f64>]) -> CMat {
    let n = m.len();
    let k = if n == 0 { 0 } else { m[0].len() };
    Mat::from_fn(n, k, |i, j| c(m[i][j], 0.0))
}

pub fn frob(m: &CMat) -> f64 {
    m.norm_l2()
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn transpose(m: &CMat) -> CMat {
    m.transpose().to_owned()
}

pub fn conj(m: &CMat) -> CMat {
    m.conjugate().to_owned()
}

pub fn block(m: &CMat, r0: usize, c0: usize, nr: usize, nc: usize) -> CMat {
    m.as_ref().submatrix(r0, c0, nr, nc).to_owned()
}

pub fn scale(m: &CMat, a: C64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| a * m[(i, j)])
}

/// `ω·𝟙 − h`.
pub fn shifted(h: &CMat, omega: f64) -> CMat {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| {
        if i == j {
            c(omega, 0.0) - h[(i, j)]
        } else {
            -h[(i, j)]
        }
    })
}

/// Full SVD `m = U diag(s) V†` with `s` ascending.
pub fn svd_ascending(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let n = m.ncols();
    let svd = m
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let perm: Vec<usize> = (0..k).rev().collect();
    let s_asc = perm.iter().map(|&p| s[p].re).collect();
    let u_asc = Mat::from_fn(u.nrows(), k, |i, j| u[(i, perm[j])]);
    let v_asc = Mat::from_fn(n, k, |i, j| v[(i, perm[j])]);
    Ok((u_asc, s_asc, v_asc))
}

pub fn singular_values_ascending(m: &CMat) -> Result<Vec<f64>> {
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    s.reverse();
    Ok(s)
}

pub fn spectral_norm(m: &CMat) -> Result<f64> {
    Ok(singular_values_ascending(m)?.last().copied().unwrap_or(0.0))
}

pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    m.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    let mut e = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    e.sort_by(f64::total_cmp);
    Ok(e)
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

pub fn determinant(m: &CMat) -> C64 {
    m.determinant()
}

/// Exact zeros above the diagonal.
pub fn is_lower_triangular(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (i + 1..m.ncols()).all(|j| m[(i, j)] == C64::new(0.0, 0.0)))
}

pub fn is_upper_triangular(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..i.min(m.ncols())).all(|j| m[(i, j)] == C64::new(0.0, 0.0)))
}

/// Inverse of a triangular matrix by substitution; backward stable even when
/// the matrix is exponentially ill-conditioned, which LU on the same input is
/// not in practice.
pub fn triangular_inverse(m: &CMat, lower: bool) -> CMat {
    let mut x = identity(m.nrows());
    if lower {
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(m.as_ref(), x.as_mut(), Par::Seq);
    } else {
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(m.as_ref(), x.as_mut(), Par::Seq);
    }
    x
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn rel_frob_diff(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let den = frob(b);
    if den == 0.0 {
        frob(&d)
    } else {
        frob(&d) / den
    }
}

/// ‖m − m†‖_max.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    max_abs_diff(m, &adjoint(m))
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_hermitian_part_eig(m: &CMat) -> Result<f64> {
    let h = Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    Ok(hermitian_eigenvalues(&h)?.first().copied().unwrap_or(0.0))
}

/// Block diagonal `diag(a, b)`.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (na, nb) = (a.nrows(), b.nrows());
    Mat::from_fn(na + nb, na + nb, |i, j| {
        if i < na && j < na {
            a[(i, j)]
        } else if i >= na && j >= na {
            b[(i - na, j - na)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> CMat {
        Mat::from_fn(n, n, |i, j| {
            let x = ((i * 7919 + j * 104729 + i * j * 31) % 1009) as f64 / 1009.0;
            let y = ((i * 13 + j * 97 + i * i) % 101) as f64 / 101.0;
            c(x - 0.5, y - 0.5)
        })
    }

    #[test]
    fn svd_is_ascending_and_reconstructs() {
        let m = sample(12);
        let (u, s, v) = svd_ascending(&m).unwrap();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        let sd = Mat::from_fn(12, 12, |i, j| if i == j { c(s[i], 0.0) } else { c(0.0, 0.0) });
        let r = &u * &sd * v.adjoint();
        assert!(rel_frob_diff(&r, &m) < 1e-12);
        let sv = singular_values_ascending(&m).unwrap();
        for (a, b) in s.iter().zip(&sv) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn triangular_inverse_matches_lu() {
        let m = Mat::from_fn(6, 6, |i, j| if j <= i { c(1.0 + i as f64, 0.3 * j as f64) } else { c(0.0, 0.0) });
        assert!(is_lower_triangular(&m));
        assert!(!is_upper_triangular(&m));
        let a = triangular_inverse(&m, true);
        let b = inverse(&m);
        assert!(rel_frob_diff(&a, &b) < 1e-12);
        let mt = transpose(&m);
        assert!(rel_frob_diff(&triangular_inverse(&mt, false), &transpose(&b)) < 1e-12);
    }

    #[test]
    fn hermitian_eigs_sorted() {
        let m = sample(8);
        let h = &m + m.adjoint();
        let e = hermitian_eigenvalues(&h).unwrap();
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        let tr: f64 = (0..8).map(|i| h[(i, i)].re).sum();
        assert!((e.iter().sum::<f64>() - tr).abs() < 1e-10);
    }
}

//! Small dense linear-algebra helpers shared by the estimator and the
//! diagnostics: numerical rank, subspace membership and symmetric helpers.
//!
//! Two kinds of rank decisions are made in this crate:
//!
//! - Rank of *given* matrices (the design `X`, the restriction matrix `R`)
//!   uses the conventional threshold `max(rows, cols) · ε · σ_max`.
//! - Rank of *computed* matrices that may be exactly deficient in exact
//!   arithmetic but carry rounding noise (`V̂₁`, `Ẑ`, `B_p`) is decided
//!   against a caller-supplied reference scale that does not itself cancel,
//!   using [`CANCELLATION_RTOL`].

use nalgebra::{DMatrix, DVector};

/// Relative threshold for singular values of matrices produced by
/// cancellation-prone computations, measured against a non-cancelling
/// reference scale.
pub const CANCELLATION_RTOL: f64 = 1e-9;

/// Residual norms below `RESIDUAL_RTOL · ‖y‖` are treated as an exact fit.
pub const RESIDUAL_RTOL: f64 = 1e-11;

/// Subspace membership tolerance for `e₊`/`e₋`: `‖(I−Π)e‖ ≤ MEMBERSHIP_TOL·√n`.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Numerical rank with the default threshold `max(rows, cols)·ε·σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Numerical rank against an external reference scale.
pub fn rank_against_scale(m: &DMatrix<f64>, scale: f64) -> usize {
    let sv = singular_values(m);
    let tol = CANCELLATION_RTOL * scale;
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(0.0_f64, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = symmetrize(m);
    s.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = symmetrize(m);
    s.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric Toeplitz matrix with first row `first_row`.
pub fn symmetric_toeplitz(first_row: &[f64]) -> DMatrix<f64> {
    let m = first_row.len();
    DMatrix::from_fn(m, m, |i, j| first_row[i.abs_diff(j)])
}

/// `e₊ = (1, …, 1)'`.
pub fn e_plus(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// `e₋ = (−1, 1, −1, …, (−1)ⁿ)'`.
pub fn e_minus(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| if i % 2 == 0 { -1.0 } else { 1.0 })
}

/// Stack columns horizontally.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let nrows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let ncols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (nrows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn relative_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = a.norm().max(b.norm());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).norm() / denom
    }
}

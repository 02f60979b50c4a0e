//! Deflated symmetric generalized eigenvalue problems.
//!
//! All stability diagnostics reduce to extremal eigenvalues of a pencil
//! (A, B) of small symmetric matrices where B is only positive semidefinite.
//! Directions with negligible B-norm are removed before inverting, so ratios
//! are taken only where the denominator is meaningful.

use nalgebra::{DMatrix, SymmetricEigen};

/// Extremal generalized eigenvalues of the pencil (A, B) restricted to the
/// B-eigendirections with eigenvalue > `tol_rel` times the largest.
///
/// Returns `None` when no direction passes the filter (the ratio is vacuous).
pub fn pencil_extremes(a: &DMatrix<f64>, b: &DMatrix<f64>, tol_rel: f64) -> Option<(f64, f64)> {
    let n = b.nrows();
    if n == 0 {
        return None;
    }
    let eig_b = SymmetricEigen::new(b.clone());
    let max_ev = eig_b.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max_ev <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| eig_b.eigenvalues[i] > tol_rel * max_ev).collect();
    if keep.is_empty() {
        return None;
    }
    // P maps the reduced coordinates onto B-orthonormal directions.
    let mut p = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let s = eig_b.eigenvalues[i].sqrt();
        for r in 0..n {
            p[(r, j)] = eig_b.eigenvectors[(r, i)] / s;
        }
    }
    let m = p.transpose() * a * &p;
    let m = 0.5 * (&m + m.transpose());
    let eigs = SymmetricEigen::new(m).eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eigs.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Some((lo, hi))
}

/// Orthonormal basis of the orthogonal complement of span(columns of `r`).
pub fn orthogonal_complement(r: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if r.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = nalgebra::SVD::new(r.clone(), true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * smax.max(1.0);
    let mut proj = DMatrix::identity(n, n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let ui = u.column(i);
            proj -= &ui * ui.transpose();
        }
    }
    // Eigenvectors of the projector with unit eigenvalue span the complement.
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> =
        (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut q = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        for row in 0..n {
            q[(row, j)] = eig.eigenvectors[(row, i)];
        }
    }
    q
}

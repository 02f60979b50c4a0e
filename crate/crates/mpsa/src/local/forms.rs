//! Discrete gradients, tractions and energy densities per variant.
//!
//! Subcell gradients are stored row-major: for two components the block is
//! [G_xx, G_xy, G_yx, G_yy] (row i holds the gradient of component i), for the
//! scalar variant [G_x, G_y].

use crate::geometry::{outer, Mat2, Vec2};
use crate::variants::Method;
use nalgebra::DMatrix;

/// Gradient degrees of freedom per subcell.
pub fn grad_dofs(ncomp: usize) -> usize {
    2 * ncomp
}

/// Rows of the affine reconstruction u_K + G (x - x_K) with respect to the
/// gradient block, for offset `r = x - x_K`: an (ncomp x grad_dofs) matrix.
pub fn reconstruction_rows(ncomp: usize, r: Vec2) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(ncomp, grad_dofs(ncomp));
    for c in 0..ncomp {
        e[(c, 2 * c)] = r.x;
        e[(c, 2 * c + 1)] = r.y;
    }
    e
}

/// Variant traction on one subface side as rows acting on the cell's gradient
/// block: an (ncomp x grad_dofs) matrix.
///
/// `factor` and `dir` are the subface measure and outward normal, except for
/// the finite difference variant where the caller passes the subcell volume
/// and the dual gradient vector instead.
pub fn traction_rows(method: Method, mu: f64, lambda: f64, factor: f64, dir: Vec2) -> DMatrix<f64> {
    match method {
        Method::MpsaFull | Method::MpsaReduced | Method::FdSymmetric => {
            // T = factor [2 mu sym(G) + lambda tr(G) I] dir
            DMatrix::from_row_slice(
                2,
                4,
                &[
                    (2.0 * mu + lambda) * dir.x,
                    mu * dir.y,
                    mu * dir.y,
                    lambda * dir.x,
                    lambda * dir.y,
                    mu * dir.x,
                    mu * dir.x,
                    (2.0 * mu + lambda) * dir.y,
                ],
            ) * factor
        }
        Method::DirichletCoercive => {
            // T = factor [mu G + (lambda + mu) tr(G) I] dir
            DMatrix::from_row_slice(
                2,
                4,
                &[
                    (2.0 * mu + lambda) * dir.x,
                    mu * dir.y,
                    0.0,
                    (lambda + mu) * dir.x,
                    (lambda + mu) * dir.y,
                    0.0,
                    mu * dir.x,
                    (2.0 * mu + lambda) * dir.y,
                ],
            ) * factor
        }
        Method::ScalarMpfa => {
            // flux = factor * kappa * G . dir, with kappa stored in mu
            DMatrix::from_row_slice(1, 2, &[mu * dir.x, mu * dir.y]) * factor
        }
    }
}

/// Physical subface traction from a subcell gradient:
/// T = m [2 mu sym(G) + lambda tr(G) I] n.
pub fn subface_traction(mu: f64, lambda: f64, g: Mat2, area: f64, n: Vec2) -> Vec2 {
    let sym = 0.5 * (g + g.transpose());
    let stress = 2.0 * mu * sym + lambda * g.trace() * Mat2::identity();
    area * (stress * n)
}

/// Consistent gradient from subface averages (exact for affine fields):
/// sum over the two corner subfaces of (avg - u_K) outer g.
pub fn consistent_gradient(gvecs: &[Vec2; 2], avgs: &[Vec2; 2], u_k: Vec2) -> Mat2 {
    outer(avgs[0] - u_k, gvecs[0]) + outer(avgs[1] - u_k, gvecs[1])
}

/// Finite volume gradient of a subcell from subface averages:
/// (1/m_K^s) sum m_sigma^s (avg - u_K) outer n.
pub fn fv_gradient(
    volume: f64,
    subfaces: &[(f64, Vec2)],
    avgs: &[Vec2],
    u_k: Vec2,
) -> Mat2 {
    let mut acc = Mat2::zeros();
    for ((area, n), avg) in subfaces.iter().zip(avgs) {
        acc += *area * outer(*avg - u_k, *n);
    }
    acc / volume
}

/// Elastic (or variant) energy density of one subcell as a sum-of-squares
/// factorization: rows acting on the gradient block such that the energy is
/// |rows * g|^2.
pub fn energy_rows(method: Method, mu: f64, lambda: f64, volume: f64) -> DMatrix<f64> {
    match method {
        Method::MpsaFull | Method::MpsaReduced | Method::FdSymmetric => {
            // m (2 mu |sym G|^2 + lambda tr(G)^2)
            //   = 2 mu m (G_xx^2 + G_yy^2) + mu m (G_xy + G_yx)^2 + lambda m tr^2
            let a = (2.0 * mu * volume).sqrt();
            let b = (mu * volume).sqrt();
            let c = (lambda * volume).sqrt();
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    a, 0.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, a, //
                    0.0, b, b, 0.0, //
                    c, 0.0, 0.0, c,
                ],
            )
        }
        Method::DirichletCoercive => {
            // m (mu |G|^2 + (lambda + mu) tr(G)^2)
            let a = (mu * volume).sqrt();
            let c = ((lambda + mu) * volume).sqrt();
            DMatrix::from_row_slice(
                5,
                4,
                &[
                    a, 0.0, 0.0, 0.0, //
                    0.0, a, 0.0, 0.0, //
                    0.0, 0.0, a, 0.0, //
                    0.0, 0.0, 0.0, a, //
                    c, 0.0, 0.0, c,
                ],
            )
        }
        Method::ScalarMpfa => {
            let a = (mu * volume).sqrt();
            DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, a])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn traction_of_rigid_rotation_vanishes() {
        // u = omega ^ x has skew gradient: sym(G) = 0 and tr(G) = 0.
        let g = Mat2::new(0.0, -1.3, 1.3, 0.0);
        let t = subface_traction(1.7, 0.4, g, 0.5, Vec2::new(0.6, 0.8));
        assert_relative_eq!(t.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn traction_matches_hand_value() {
        // u = (x, 0), mu = lambda = 1, bottom subface of the unit cell:
        // stress [[3,0],[0,1]], T = 0.5 * stress * (0,-1) = (0, -0.5).
        let g = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let t = subface_traction(1.0, 1.0, g, 0.5, Vec2::new(0.0, -1.0));
        assert_relative_eq!(t.x, 0.0);
        assert_relative_eq!(t.y, -0.5);
    }

    #[test]
    fn traction_linear_in_coefficients() {
        let g = Mat2::new(0.3, -0.2, 0.9, 1.1);
        let n = Vec2::new(0.6, -0.8);
        let t1 = subface_traction(1.2, 0.7, g, 0.4, n);
        let t2 = subface_traction(3.6, 2.1, g, 0.4, n);
        assert_relative_eq!((t2 - 3.0 * t1).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn traction_rows_agree_with_direct_formula() {
        let g = Mat2::new(0.3, -0.2, 0.9, 1.1);
        let n = Vec2::new(0.6, -0.8);
        let rows = traction_rows(Method::MpsaFull, 1.2, 0.7, 0.4, n);
        let z = DVector::from_vec(vec![g.m11, g.m12, g.m21, g.m22]);
        let t = rows * z;
        let want = subface_traction(1.2, 0.7, g, 0.4, n);
        assert_relative_eq!(t[0], want.x, epsilon = 1e-14);
        assert_relative_eq!(t[1], want.y, epsilon = 1e-14);
    }

    #[test]
    fn fv_gradient_of_constant_is_zero() {
        let subs = [(0.5, Vec2::new(0.0, -1.0)), (0.5, Vec2::new(-1.0, 0.0))];
        let avgs = [Vec2::new(2.0, -1.0), Vec2::new(2.0, -1.0)];
        let g = fv_gradient(0.25, &subs, &avgs, Vec2::new(2.0, -1.0));
        assert_relative_eq!(g.norm(), 0.0);
    }

    #[test]
    fn fv_gradient_linear_field_on_cartesian_subcell() {
        // u = (x, 0) on the unit Cartesian corner subcell at (0,0) with
        // subface averages taken at the subface midpoints (0.25,0), (0,0.25)
        // and u_K = (0.5, 0): the derived value is [[1, 1/2],[0,0]] (the
        // two-subface sum is not a full divergence theorem).
        let subs = [(0.5, Vec2::new(0.0, -1.0)), (0.5, Vec2::new(-1.0, 0.0))];
        let avgs = [Vec2::new(0.25, 0.0), Vec2::new(0.0, 0.0)];
        let g = fv_gradient(0.25, &subs, &avgs, Vec2::new(0.5, 0.0));
        assert_relative_eq!(g.m11, 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.m12, 0.5, epsilon = 1e-14);
        assert_relative_eq!(g.m21, 0.0, epsilon = 1e-14);
        assert_relative_eq!(g.m22, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn energy_rows_reproduce_density() {
        let g = Mat2::new(0.3, -0.2, 0.9, 1.1);
        let z = DVector::from_vec(vec![g.m11, g.m12, g.m21, g.m22]);
        let (mu, lambda, vol) = (1.3, 0.6, 0.2);
        let rows = energy_rows(Method::MpsaFull, mu, lambda, vol);
        let got = (rows * &z).norm_squared();
        let sym = 0.5 * (g + g.transpose());
        let want = vol * (2.0 * mu * (sym.transpose() * sym).trace() + lambda * g.trace().powi(2));
        assert_relative_eq!(got, want, max_relative = 1e-13);
    }
}

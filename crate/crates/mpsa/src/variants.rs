//! Method variants sharing the local/global assembly machinery.

use crate::fields::MaterialField;
use crate::mesh::{BoundaryTag, MeshTriplet, QuadratureRule};
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Cell-centered stress approximation with two-point subface quadrature.
    MpsaFull,
    /// Single continuity point per subface at parameter eta along the face.
    MpsaReduced,
    /// Symmetric finite difference relative: consistent gradients in both
    /// slots of the bilinear form. Loses exact per-cell force balance.
    FdSymmetric,
    /// Locally coercive form for constant coefficients and pure Dirichlet
    /// boundaries (full gradient instead of the symmetric one).
    DirichletCoercive,
    /// Scalar diffusion specialization (one component, fluxes for tractions).
    ScalarMpfa,
}

impl Method {
    pub fn ncomp(self) -> usize {
        match self {
            Method::ScalarMpfa => 1,
            _ => 2,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpsa_full" => Ok(Method::MpsaFull),
            "mpsa_reduced" => Ok(Method::MpsaReduced),
            "fd_symmetric" => Ok(Method::FdSymmetric),
            "dirichlet_coercive" => Ok(Method::DirichletCoercive),
            "scalar_mpfa" => Ok(Method::ScalarMpfa),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VariantConfig {
    pub method: Method,
    /// Continuity point parameter for `MpsaReduced`.
    pub eta: f64,
    /// Allow reduced integration off simplex meshes; local ill-posedness is
    /// then a legal runtime outcome.
    pub force: bool,
    /// Constant override for the jump stabilization weights.
    pub alpha_override: Option<f64>,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self { method: Method::MpsaFull, eta: 1.0 / 3.0, force: false, alpha_override: None }
    }
}

#[derive(Debug, Error)]
pub enum VariantError {
    #[error("reduced integration requires a simplex mesh (cell {cell} has {n} vertices); set force=true to override")]
    ReducedOnNonSimplex { cell: usize, n: usize },
    #[error("eta must lie in (0,1), got {0}")]
    BadEta(f64),
    #[error("dirichlet_coercive requires constant material coefficients")]
    NonConstantCoefficients,
    #[error("dirichlet_coercive requires an all-Dirichlet boundary")]
    NotAllDirichlet,
}

impl VariantConfig {
    pub fn method_only(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn quadrature(&self) -> QuadratureRule {
        match self.method {
            Method::MpsaReduced => QuadratureRule::Reduced { eta: self.eta },
            _ => QuadratureRule::TwoPoint,
        }
    }

    pub fn validate(&self, mesh: &MeshTriplet, mats: &MaterialField) -> Result<(), VariantError> {
        match self.method {
            Method::MpsaReduced => {
                if !(self.eta > 0.0 && self.eta < 1.0) {
                    return Err(VariantError::BadEta(self.eta));
                }
                if !self.force {
                    for (c, poly) in mesh.cells.iter().enumerate() {
                        if poly.len() != 3 {
                            return Err(VariantError::ReducedOnNonSimplex { cell: c, n: poly.len() });
                        }
                    }
                }
                Ok(())
            }
            Method::DirichletCoercive => {
                if !mats.is_constant() {
                    return Err(VariantError::NonConstantCoefficients);
                }
                let all_d = mesh
                    .boundary_tags
                    .iter()
                    .flatten()
                    .all(|&t| t == BoundaryTag::Dirichlet);
                if !all_d {
                    return Err(VariantError::NotAllDirichlet);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Jump stabilization weight for a subface adjacent to the given cells:
    /// harmonic mean of (2 mu + lambda) over the face neighbors, or the
    /// configured constant.
    pub fn alpha(&self, mats: &MaterialField, cells: &[usize]) -> f64 {
        if let Some(a) = self.alpha_override {
            return a;
        }
        let inv: f64 = cells
            .iter()
            .map(|&c| match self.method {
                Method::ScalarMpfa => 1.0 / mats.mu[c],
                _ => 1.0 / (2.0 * mats.mu[c] + mats.lambda[c]),
            })
            .sum();
        cells.len() as f64 / inv
    }
}

/// Reduced-integration continuity point on the face [x_s, x_v]:
/// x_beta = x_s + eta (x_v - x_s), carrying the whole subface weight.
pub fn reduced_quadrature_point(
    x_s: crate::geometry::Vec2,
    x_v: crate::geometry::Vec2,
    eta: f64,
    subface_area: f64,
) -> (crate::geometry::Vec2, f64) {
    (x_s + eta * (x_v - x_s), subface_area)
}

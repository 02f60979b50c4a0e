//! Cell-centered fields, material coefficients and problem data.

use crate::geometry::Vec2;
use crate::mesh::{MeshTriplet, SubcellGeometry};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("cell {cell}: shear modulus {mu} outside declared bounds [{lo}, {hi}]")]
    MuOutOfBounds { cell: usize, mu: f64, lo: f64, hi: f64 },
    #[error("cell {cell}: lambda {lambda} is negative")]
    NegativeLambda { cell: usize, lambda: f64 },
    #[error("field length {len} does not match {ncells} cells x {ncomp} components")]
    BadLength { len: usize, ncells: usize, ncomp: usize },
    #[error("pure-Neumann data violates the compatibility condition: |sum f + sum g_N| = {residual:.3e} > {tol:.3e}")]
    Incompatible { residual: f64, tol: f64 },
}

/// Per-cell Lame parameters (subcell-constant). The scalar diffusion variant
/// reads `mu` as the diffusivity and ignores `lambda`.
#[derive(Clone, Debug)]
pub struct MaterialField {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl MaterialField {
    pub fn constant(ncells: usize, mu: f64, lambda: f64) -> Self {
        Self { mu: vec![mu; ncells], lambda: vec![lambda; ncells] }
    }

    /// Check 0 < lo <= mu_K <= hi and lambda_K >= 0.
    pub fn validate(&self, lo: f64, hi: f64) -> Result<(), FieldError> {
        for (cell, &mu) in self.mu.iter().enumerate() {
            if !(mu >= lo && mu <= hi && lo > 0.0) {
                return Err(FieldError::MuOutOfBounds { cell, mu, lo, hi });
            }
        }
        for (cell, &lambda) in self.lambda.iter().enumerate() {
            if lambda < 0.0 {
                return Err(FieldError::NegativeLambda { cell, lambda });
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        let mu0 = self.mu[0];
        let l0 = self.lambda[0];
        self.mu.iter().all(|&m| m == mu0) && self.lambda.iter().all(|&l| l == l0)
    }
}

/// Cell-centered unknowns: `ncomp` values per cell, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(ncells: usize, ncomp: usize) -> Self {
        Self { ncomp, data: vec![0.0; ncells * ncomp] }
    }

    pub fn from_fn(mesh: &MeshTriplet, ncomp: usize, f: impl Fn(Vec2) -> Vec2) -> Self {
        let mut data = Vec::with_capacity(mesh.n_cells() * ncomp);
        for c in 0..mesh.n_cells() {
            let v = f(mesh.cell_centers[c]);
            data.push(v.x);
            if ncomp == 2 {
                data.push(v.y);
            }
        }
        Self { ncomp, data }
    }

    pub fn n_cells(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn get(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.ncomp..(cell + 1) * self.ncomp]
    }

    pub fn check_length(&self, ncells: usize) -> Result<(), FieldError> {
        if self.data.len() != ncells * self.ncomp {
            return Err(FieldError::BadLength {
                len: self.data.len(),
                ncells,
                ncomp: self.ncomp,
            });
        }
        Ok(())
    }
}

pub type VecFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
/// Neumann data: physical traction density as a function of position and
/// outward unit normal.
pub type TracFn = Arc<dyn Fn(Vec2, Vec2) -> Vec2 + Send + Sync>;

/// Body force and boundary data. The scalar variant uses the x components.
#[derive(Clone)]
pub struct ProblemData {
    pub body_force: VecFn,
    pub dirichlet: VecFn,
    pub neumann: TracFn,
}

impl ProblemData {
    pub fn homogeneous() -> Self {
        Self {
            body_force: Arc::new(|_| Vec2::zeros()),
            dirichlet: Arc::new(|_| Vec2::zeros()),
            neumann: Arc::new(|_, _| Vec2::zeros()),
        }
    }

    /// Discrete compatibility for pure-Neumann problems:
    /// sum_K int_K f + sum_boundary int_sigma g_N = 0 componentwise.
    pub fn check_neumann_compatibility(
        &self,
        mesh: &MeshTriplet,
        geo: &SubcellGeometry,
        tol: f64,
    ) -> Result<(), FieldError> {
        let mut total = Vec2::zeros();
        let mut scale = 0.0f64;
        for c in 0..mesh.n_cells() {
            for (k, &v) in mesh.cells[c].iter().enumerate() {
                let _ = v;
                let w = geo.subcell_volume[c][k];
                let fval = (self.body_force)(geo.subcell_centroid[c][k]);
                total += w * fval;
                scale += w * fval.norm();
            }
        }
        for (fi, f) in mesh.faces.iter().enumerate() {
            if mesh.boundary_tags[fi].is_some() {
                let n = mesh.outward_normal(fi, f.left);
                for e in 0..2 {
                    for &(x, w) in &geo.subface[fi][e].gauss {
                        let g = (self.neumann)(x, n);
                        total += w * g;
                        scale += w * g.norm();
                    }
                }
            }
        }
        let residual = total.norm();
        let bound = tol * scale.max(1.0);
        if residual > bound {
            return Err(FieldError::Incompatible { residual, tol: bound });
        }
        Ok(())
    }
}

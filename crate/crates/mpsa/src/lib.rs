//! Cell-centered finite volume discretization of 2D linear elasticity by
//! multi-point stress approximation, with per-vertex coercivity auditing and
//! a manufactured-solution verification harness.
//!
//! The solver assembles subface tractions as linear combinations of nearby
//! cell-center displacements (stress weight tensors), obtained from small
//! constrained minimization problems posed on the interaction region around
//! each mesh vertex. Variants sharing the machinery: reduced single-point
//! quadrature, a symmetric finite-difference relative, a locally coercive
//! pure-Dirichlet form, and the scalar diffusion specialization.

pub mod cli;
pub mod coercivity;
pub mod fields;
pub mod geometry;
pub mod global;
pub mod linsolve;
pub mod local;
pub mod mesh;
pub mod norms;
pub mod parallel;
pub mod pencil;
pub mod variants;
pub mod verification;

pub use fields::{CellField, MaterialField, ProblemData};
pub use geometry::{Mat2, Vec2};
pub use mesh::{BoundaryTag, MeshError, MeshTriplet, QuadratureRule, SubcellGeometry};
pub use variants::{Method, VariantConfig};

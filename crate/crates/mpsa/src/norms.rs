//! Discrete function spaces and their (semi)norms.
//!
//! Three spaces appear: cell fields (one value per cell), continuous hybrid
//! fields (one extra value per subface) and discontinuous fields (one value
//! per subface quadrature point and side). Dirichlet faces carry pinned zero
//! values in all of them; the interpolant and averages honor that.

use crate::fields::CellField;
use crate::geometry::Vec2;
use crate::mesh::{BoundaryTag, MeshTriplet, SubcellGeometry};
use rand::Rng;

/// Discontinuous field: cell values plus one value per (face, end, side,
/// quadrature point).
#[derive(Clone, Debug)]
pub struct DField {
    pub ncomp: usize,
    pub cell: Vec<f64>,
    /// vals[face][end][side][gauss] -> component pair (y unused for scalar).
    pub vals: Vec<[Vec<Vec<[f64; 2]>>; 2]>,
}

/// Hybrid field: cell values plus one value per (face, end).
#[derive(Clone, Debug)]
pub struct CField {
    pub ncomp: usize,
    pub cell: Vec<f64>,
    pub vals: Vec<[[f64; 2]; 2]>,
}

impl DField {
    pub fn zeros(mesh: &MeshTriplet, geo: &SubcellGeometry, ncomp: usize) -> Self {
        let vals = mesh
            .faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let per_end = |e: usize| {
                    let ng = geo.subface[fi][e].gauss.len();
                    f.cells().map(|_| vec![[0.0; 2]; ng]).collect::<Vec<_>>()
                };
                [per_end(0), per_end(1)]
            })
            .collect();
        Self { ncomp, cell: vec![0.0; mesh.n_cells() * ncomp], vals }
    }

    pub fn random(
        mesh: &MeshTriplet,
        geo: &SubcellGeometry,
        ncomp: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut u = Self::zeros(mesh, geo, ncomp);
        for v in &mut u.cell {
            *v = rng.gen_range(-1.0..1.0);
        }
        for (fi, f) in mesh.faces.iter().enumerate() {
            if mesh.boundary_tags[fi] == Some(BoundaryTag::Dirichlet) {
                continue; // pinned to zero
            }
            for e in 0..2 {
                for side in &mut u.vals[fi][e] {
                    for g in side.iter_mut() {
                        for c in 0..ncomp {
                            g[c] = rng.gen_range(-1.0..1.0);
                        }
                    }
                }
            }
            let _ = f;
        }
        u
    }

    pub fn cell_val(&self, c: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for k in 0..self.ncomp {
            out[k] = self.cell[c * self.ncomp + k];
        }
        out
    }

    /// Quadrature-averaged two-sided subface value; zero on Dirichlet faces,
    /// one-sided on other boundary faces.
    pub fn subface_avg(
        &self,
        mesh: &MeshTriplet,
        geo: &SubcellGeometry,
        fi: usize,
        e: usize,
    ) -> [f64; 2] {
        if mesh.boundary_tags[fi] == Some(BoundaryTag::Dirichlet) {
            return [0.0; 2];
        }
        let gauss = &geo.subface[fi][e].gauss;
        let wsum: f64 = gauss.iter().map(|g| g.1).sum();
        let nside = self.vals[fi][e].len();
        let mut acc = [0.0; 2];
        for side in &self.vals[fi][e] {
            for (g, &(_, w)) in side.iter().zip(gauss) {
                for c in 0..self.ncomp {
                    acc[c] += w * g[c];
                }
            }
        }
        for c in 0..2 {
            acc[c] /= wsum * nside as f64;
        }
        acc
    }

    /// One-sided subface average for a given side index.
    pub fn side_avg(&self, geo: &SubcellGeometry, fi: usize, e: usize, side: usize) -> [f64; 2] {
        let gauss = &geo.subface[fi][e].gauss;
        let wsum: f64 = gauss.iter().map(|g| g.1).sum();
        let mut acc = [0.0; 2];
        for (g, &(_, w)) in self.vals[fi][e][side].iter().zip(gauss) {
            for c in 0..self.ncomp {
                acc[c] += w * g[c];
            }
        }
        for c in 0..2 {
            acc[c] /= wsum;
        }
        acc
    }

    /// Jump at one quadrature point, ordered (min cell) - (max cell); zero on
    /// boundary faces.
    pub fn jump(&self, mesh: &MeshTriplet, fi: usize, e: usize, q: usize) -> [f64; 2] {
        let f = &mesh.faces[fi];
        match f.right {
            None => [0.0; 2],
            Some(r) => {
                // vals side order follows f.cells(): left first.
                let (lo_side, hi_side) = if f.left < r { (0, 1) } else { (1, 0) };
                let a = self.vals[fi][e][lo_side][q];
                let b = self.vals[fi][e][hi_side][q];
                [a[0] - b[0], a[1] - b[1]]
            }
        }
    }
}

impl CField {
    pub fn zeros(mesh: &MeshTriplet, ncomp: usize) -> Self {
        Self {
            ncomp,
            cell: vec![0.0; mesh.n_cells() * ncomp],
            vals: vec![[[0.0; 2]; 2]; mesh.n_faces()],
        }
    }

    pub fn random(mesh: &MeshTriplet, ncomp: usize, rng: &mut impl Rng) -> Self {
        let mut u = Self::zeros(mesh, ncomp);
        for v in &mut u.cell {
            *v = rng.gen_range(-1.0..1.0);
        }
        for (fi, v) in u.vals.iter_mut().enumerate() {
            if mesh.boundary_tags[fi] == Some(BoundaryTag::Dirichlet) {
                continue;
            }
            for e in 0..2 {
                for c in 0..ncomp {
                    v[e][c] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        u
    }
}

/// Inject a hybrid field into the discontinuous space (copy the subface value
/// to every side and quadrature point).
pub fn project_d(mesh: &MeshTriplet, geo: &SubcellGeometry, u: &CField) -> DField {
    let mut out = DField::zeros(mesh, geo, u.ncomp);
    out.cell.copy_from_slice(&u.cell);
    for fi in 0..mesh.n_faces() {
        for e in 0..2 {
            for side in &mut out.vals[fi][e] {
                for g in side.iter_mut() {
                    *g = u.vals[fi][e];
                }
            }
        }
    }
    out
}

/// Average a discontinuous field onto the hybrid space.
pub fn project_c(mesh: &MeshTriplet, geo: &SubcellGeometry, u: &DField) -> CField {
    let mut out = CField::zeros(mesh, u.ncomp);
    out.cell.copy_from_slice(&u.cell);
    for fi in 0..mesh.n_faces() {
        for e in 0..2 {
            out.vals[fi][e] = u.subface_avg(mesh, geo, fi, e);
        }
    }
    out
}

/// Restrict to cell values.
pub fn project_t_cells(ncomp: usize, cell: &[f64]) -> CellField {
    CellField { ncomp, data: cell.to_vec() }
}

/// Distance-weighted face interpolant of a cell field; zero on Dirichlet
/// faces.
pub fn gamma_face(mesh: &MeshTriplet, u: &CellField, fi: usize) -> [f64; 2] {
    if mesh.boundary_tags[fi] == Some(BoundaryTag::Dirichlet) {
        return [0.0; 2];
    }
    let f = &mesh.faces[fi];
    let mut num = [0.0; 2];
    let mut den = 0.0;
    for c in f.cells() {
        let d = mesh.center_face_distance(fi, c);
        den += 1.0 / d;
        for k in 0..u.ncomp {
            num[k] += u.get(c)[k] / d;
        }
    }
    [num[0] / den, num[1] / den]
}

/// Global |.|_T seminorm of a cell field.
pub fn t_norm(mesh: &MeshTriplet, u: &CellField) -> f64 {
    let mut acc = 0.0;
    for (fi, f) in mesh.faces.iter().enumerate() {
        let g = gamma_face(mesh, u, fi);
        let m = mesh.face_measure(fi);
        for c in f.cells() {
            let d = mesh.center_face_distance(fi, c);
            for k in 0..u.ncomp {
                let diff = g[k] - u.get(c)[k];
                acc += m / d * diff * diff;
            }
        }
    }
    acc.sqrt()
}

/// Per-vertex |.|_{T,s} contribution (subface measures instead of full faces).
pub fn t_norm_local_sq(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    u: &CellField,
    vertex: usize,
) -> f64 {
    let mut acc = 0.0;
    for &fi in &mesh.faces_of_vertex[vertex] {
        let g = gamma_face(mesh, u, fi);
        let m = geo.subface_at(fi, vertex, mesh).area;
        for c in mesh.faces[fi].cells() {
            let d = mesh.center_face_distance(fi, c);
            for k in 0..u.ncomp {
                let diff = g[k] - u.get(c)[k];
                acc += m / d * diff * diff;
            }
        }
    }
    acc
}

/// Per-vertex |.|_{D,s}^2 of a discontinuous field.
pub fn d_norm_local_sq(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    u: &DField,
    vertex: usize,
) -> f64 {
    let mut acc = 0.0;
    for &fi in &mesh.faces_of_vertex[vertex] {
        let f = &mesh.faces[fi];
        let e = if f.verts[0] == vertex { 0 } else { 1 };
        let sf = &geo.subface[fi][e];
        let avg = u.subface_avg(mesh, geo, fi, e);
        for c in f.cells() {
            let d = mesh.center_face_distance(fi, c);
            let vol = geo.volume_at(c, vertex, mesh);
            let w = vol / (d * d);
            for k in 0..u.ncomp {
                let diff = u.cell_val(c)[k] - avg[k];
                acc += w * diff * diff;
            }
            // Jump contribution, once per adjacent cell with its weights.
            let mut jacc = 0.0;
            for (q, &(_, wq)) in sf.gauss.iter().enumerate() {
                let j = u.jump(mesh, fi, e, q);
                for k in 0..u.ncomp {
                    jacc += wq * j[k] * j[k];
                }
            }
            acc += w / sf.area * jacc;
        }
    }
    acc
}

/// Global |.|_D seminorm.
pub fn d_norm(mesh: &MeshTriplet, geo: &SubcellGeometry, u: &DField) -> f64 {
    (0..mesh.n_vertices())
        .map(|v| d_norm_local_sq(mesh, geo, u, v))
        .sum::<f64>()
        .sqrt()
}

/// |.|_C seminorm of a hybrid field (the D-norm of its injection).
pub fn c_norm(mesh: &MeshTriplet, geo: &SubcellGeometry, u: &CField) -> f64 {
    d_norm(mesh, geo, &project_d(mesh, geo, u))
}

/// Sample a smooth vector field at subface quadrature points and cell centers
/// (both sides identical): the discontinuous-space image of a continuous one.
pub fn sample_continuous(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    ncomp: usize,
    f: impl Fn(Vec2) -> Vec2,
) -> DField {
    let mut u = DField::zeros(mesh, geo, ncomp);
    for c in 0..mesh.n_cells() {
        let v = f(mesh.cell_centers[c]);
        u.cell[c * ncomp] = v.x;
        if ncomp == 2 {
            u.cell[c * ncomp + 1] = v.y;
        }
    }
    for fi in 0..mesh.n_faces() {
        for e in 0..2 {
            for side in 0..u.vals[fi][e].len() {
                for (q, &(x, _)) in geo.subface[fi][e].gauss.iter().enumerate() {
                    let v = f(x);
                    u.vals[fi][e][side][q] = [v.x, v.y];
                }
            }
        }
    }
    u
}

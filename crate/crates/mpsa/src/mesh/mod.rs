//! Polygonal mesh triplet (cells, faces, vertices) with derived adjacency,
//! subcell/subface geometry and quadrature.
//!
//! A mesh is a non-overlapping partition of a 2D polygonal domain into CCW
//! polygons. Faces are the (undirected) cell edges; every interior face has
//! exactly two adjacent cells, boundary faces one. Each (cell, vertex) pair
//! owning the vertex carries a quadrilateral subcell spanned by the cell
//! center, the two adjacent face midpoints and the vertex, and each (face,
//! vertex) pair carries a subface from the vertex to the face midpoint.

pub mod generate;
pub mod io;

use crate::geometry::{
    gauss2_on_segment, outward_normal_ccw, polygon_centroid, polygon_signed_area, Vec2,
};
use std::collections::HashMap;
use thiserror::Error;

/// Boundary condition kind attached to a boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// A mesh face: an oriented segment between two vertex indices with its
/// adjacent cells. `left` traverses `verts[0] -> verts[1]` in its own CCW
/// polygon order; `right` (if any) traverses it backwards.
#[derive(Clone, Debug)]
pub struct Face {
    pub verts: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.left).chain(self.right)
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell} references vertex index {vertex} out of range ({nverts} vertices)")]
    VertexOutOfRange { cell: usize, vertex: usize, nverts: usize },
    #[error("cell {cell} has fewer than 3 vertices")]
    DegenerateCell { cell: usize },
    #[error("cell {cell} is not counterclockwise (signed area {area:.3e})")]
    NotCcw { cell: usize, area: f64 },
    #[error("face ({a},{b}) is shared by more than two cells")]
    NonManifoldFace { a: usize, b: usize },
    #[error("interior face ({a},{b}) traversed in the same direction by both cells")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("cell {cell} is not star-shaped with respect to its center at vertex {vertex}")]
    NotStarShaped { cell: usize, vertex: usize },
    #[error("degenerate (zero-area) subcell at cell {cell}, vertex {vertex}")]
    DegenerateSubcell { cell: usize, vertex: usize },
    #[error("cell {cell} at vertex {vertex} has {count} adjacent faces at that vertex, expected 2")]
    BadCorner { cell: usize, vertex: usize, count: usize },
    #[error("subcell volumes of cell {cell} sum to {sum:.17e}, cell area is {area:.17e}")]
    SubcellPartition { cell: usize, sum: f64, area: f64 },
    #[error("boundary face ({a},{b}) has no boundary tag")]
    MissingTag { a: usize, b: usize },
    #[error("perturbation produced a non-star-shaped cell {cell}")]
    BadPerturbation { cell: usize },
    #[error("{0}")]
    Io(#[from] io::MeshParseError),
}

/// The mesh triplet: tessellation, faces and vertices, with adjacency.
#[derive(Clone, Debug)]
pub struct MeshTriplet {
    pub vertices: Vec<Vec2>,
    /// CCW vertex index loops, one per cell.
    pub cells: Vec<Vec<usize>>,
    pub faces: Vec<Face>,
    /// Tag per face; `None` on interior faces.
    pub boundary_tags: Vec<Option<BoundaryTag>>,
    pub cell_centers: Vec<Vec2>,
    pub cell_areas: Vec<f64>,
    /// Faces on the boundary of each cell.
    pub faces_of_cell: Vec<Vec<usize>>,
    /// Cells adjacent to each vertex (ascending).
    pub cells_of_vertex: Vec<Vec<usize>>,
    /// Faces incident to each vertex (ascending).
    pub faces_of_vertex: Vec<Vec<usize>>,
}

impl MeshTriplet {
    /// Build a mesh from raw vertices, CCW cell loops and boundary tags keyed
    /// by (unordered) vertex pair. Derives all adjacency and validates the
    /// type invariants.
    pub fn from_cells(
        vertices: Vec<Vec2>,
        cells: Vec<Vec<usize>>,
        tags: &HashMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self, MeshError> {
        let nverts = vertices.len();
        for (c, poly) in cells.iter().enumerate() {
            if poly.len() < 3 {
                return Err(MeshError::DegenerateCell { cell: c });
            }
            for &v in poly {
                if v >= nverts {
                    return Err(MeshError::VertexOutOfRange { cell: c, vertex: v, nverts });
                }
            }
            let pts: Vec<Vec2> = poly.iter().map(|&v| vertices[v]).collect();
            let area = polygon_signed_area(&pts);
            if area <= 0.0 {
                return Err(MeshError::NotCcw { cell: c, area });
            }
        }

        // Face extraction: key on the unordered vertex pair.
        let mut face_of_pair: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        for (c, poly) in cells.iter().enumerate() {
            let n = poly.len();
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                let key = (a.min(b), a.max(b));
                match face_of_pair.get(&key) {
                    None => {
                        face_of_pair.insert(key, faces.len());
                        faces.push(Face { verts: [a, b], left: c, right: None });
                    }
                    Some(&fi) => {
                        let f = &mut faces[fi];
                        if f.right.is_some() {
                            return Err(MeshError::NonManifoldFace { a: key.0, b: key.1 });
                        }
                        // The second cell must traverse the edge backwards.
                        if f.verts == [a, b] {
                            return Err(MeshError::InconsistentOrientation { a: key.0, b: key.1 });
                        }
                        f.right = Some(c);
                    }
                }
            }
        }

        let mut boundary_tags = vec![None; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            if f.is_boundary() {
                let key = (f.verts[0].min(f.verts[1]), f.verts[0].max(f.verts[1]));
                boundary_tags[fi] = Some(
                    tags.get(&key)
                        .copied()
                        .ok_or(MeshError::MissingTag { a: key.0, b: key.1 })?,
                );
            }
        }

        let cell_centers: Vec<Vec2> = cells
            .iter()
            .map(|poly| {
                let pts: Vec<Vec2> = poly.iter().map(|&v| vertices[v]).collect();
                polygon_centroid(&pts)
            })
            .collect();
        let cell_areas: Vec<f64> = cells
            .iter()
            .map(|poly| {
                let pts: Vec<Vec2> = poly.iter().map(|&v| vertices[v]).collect();
                polygon_signed_area(&pts)
            })
            .collect();

        let mut faces_of_cell = vec![Vec::new(); cells.len()];
        for (fi, f) in faces.iter().enumerate() {
            faces_of_cell[f.left].push(fi);
            if let Some(r) = f.right {
                faces_of_cell[r].push(fi);
            }
        }
        let mut cells_of_vertex = vec![Vec::new(); nverts];
        for (c, poly) in cells.iter().enumerate() {
            for &v in poly {
                cells_of_vertex[v].push(c);
            }
        }
        for l in &mut cells_of_vertex {
            l.sort_unstable();
            l.dedup();
        }
        let mut faces_of_vertex = vec![Vec::new(); nverts];
        for (fi, f) in faces.iter().enumerate() {
            faces_of_vertex[f.verts[0]].push(fi);
            faces_of_vertex[f.verts[1]].push(fi);
        }
        for l in &mut faces_of_vertex {
            l.sort_unstable();
        }

        let mesh = Self {
            vertices,
            cells,
            faces,
            boundary_tags,
            cell_centers,
            cell_areas,
            faces_of_cell,
            cells_of_vertex,
            faces_of_vertex,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Total area, which equals the domain area since cells partition it.
    pub fn total_area(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Grid diameter h = max cell diameter.
    pub fn h_max(&self) -> f64 {
        let mut h: f64 = 0.0;
        for poly in &self.cells {
            for (i, &a) in poly.iter().enumerate() {
                for &b in &poly[i + 1..] {
                    h = h.max((self.vertices[a] - self.vertices[b]).norm());
                }
            }
        }
        h
    }

    /// Diameter of one cell.
    pub fn cell_diameter(&self, c: usize) -> f64 {
        let poly = &self.cells[c];
        let mut h: f64 = 0.0;
        for (i, &a) in poly.iter().enumerate() {
            for &b in &poly[i + 1..] {
                h = h.max((self.vertices[a] - self.vertices[b]).norm());
            }
        }
        h
    }

    /// The two faces of cell `c` meeting at vertex `v`.
    pub fn corner_faces(&self, c: usize, v: usize) -> Result<[usize; 2], MeshError> {
        let mut out = [usize::MAX; 2];
        let mut count = 0;
        for &fi in &self.faces_of_vertex[v] {
            let f = &self.faces[fi];
            if f.left == c || f.right == Some(c) {
                if count < 2 {
                    out[count] = fi;
                }
                count += 1;
            }
        }
        if count != 2 {
            return Err(MeshError::BadCorner { cell: c, vertex: v, count });
        }
        Ok(out)
    }

    /// Outward unit normal of face `fi` with respect to cell `c`.
    pub fn outward_normal(&self, fi: usize, c: usize) -> Vec2 {
        let f = &self.faces[fi];
        let a = self.vertices[f.verts[0]];
        let b = self.vertices[f.verts[1]];
        let n = outward_normal_ccw(a, b);
        if f.left == c {
            n
        } else {
            -n
        }
    }

    /// Perpendicular distance from the center of cell `c` to the line of face `fi`.
    pub fn center_face_distance(&self, fi: usize, c: usize) -> f64 {
        let f = &self.faces[fi];
        let a = self.vertices[f.verts[0]];
        let b = self.vertices[f.verts[1]];
        let n = outward_normal_ccw(a, b);
        (a - self.cell_centers[c]).dot(&n).abs()
    }

    /// Full face measure (segment length).
    pub fn face_measure(&self, fi: usize) -> f64 {
        let f = &self.faces[fi];
        (self.vertices[f.verts[1]] - self.vertices[f.verts[0]]).norm()
    }

    /// Face midpoint.
    pub fn face_midpoint(&self, fi: usize) -> Vec2 {
        let f = &self.faces[fi];
        0.5 * (self.vertices[f.verts[0]] + self.vertices[f.verts[1]])
    }

    /// Uniformly scale all coordinates by `c` (used by the h-independence checks).
    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v *= c;
        }
        for x in &mut m.cell_centers {
            *x *= c;
        }
        for a in &mut m.cell_areas {
            *a *= c * c;
        }
        m
    }

    /// Re-tag boundary faces using a predicate on the face midpoint.
    pub fn retag_boundary(&mut self, tag_of: impl Fn(Vec2) -> BoundaryTag) {
        for fi in 0..self.faces.len() {
            if self.faces[fi].is_boundary() {
                self.boundary_tags[fi] = Some(tag_of(self.face_midpoint(fi)));
            }
        }
    }

    fn validate(&self) -> Result<(), MeshError> {
        for (c, poly) in self.cells.iter().enumerate() {
            for &v in poly {
                self.corner_faces(c, v)?;
            }
        }
        // Star-shapedness with respect to the cell center: every subface seen
        // from x_K must have positive outward offset.
        for (c, poly) in self.cells.iter().enumerate() {
            for &v in poly {
                for fi in self.corner_faces(c, v)? {
                    let mid = 0.5 * (self.vertices[v] + self.face_midpoint(fi));
                    let n = self.outward_normal(fi, c);
                    if (mid - self.cell_centers[c]).dot(&n) <= 0.0 {
                        return Err(MeshError::NotStarShaped { cell: c, vertex: v });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Quadrature placement on subfaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadratureRule {
    /// Two-point Gauss-Legendre per subface segment.
    TwoPoint,
    /// Single continuity point at `x_s + eta (x_v - x_s)` along the full face,
    /// carrying the whole subface weight.
    Reduced { eta: f64 },
}

/// Geometry of one subface (face restricted to one of its end vertices).
#[derive(Clone, Debug)]
pub struct Subface {
    pub face: usize,
    pub vertex: usize,
    /// Subface measure m_sigma^s (half the face length).
    pub area: f64,
    /// Quadrature-weighted centroid of the subface point set.
    pub midpoint: Vec2,
    pub gauss: Vec<(Vec2, f64)>,
}

/// Per-(cell, vertex) and per-(face, vertex) geometric data.
#[derive(Clone, Debug)]
pub struct SubcellGeometry {
    /// `subcell_volume[c][k]` for the k-th vertex of cell c.
    pub subcell_volume: Vec<Vec<f64>>,
    /// Subcell polygon centroid, same indexing.
    pub subcell_centroid: Vec<Vec<Vec2>>,
    /// `subface[f][e]` for face f and its end e in {0,1} (vertex = verts[e]).
    pub subface: Vec<[Subface; 2]>,
    pub rule: QuadratureRule,
}

impl SubcellGeometry {
    pub fn subface_at(&self, face: usize, vertex: usize, mesh: &MeshTriplet) -> &Subface {
        let f = &mesh.faces[face];
        let e = if f.verts[0] == vertex { 0 } else { 1 };
        &self.subface[face][e]
    }

    /// Volume m_K^s for cell `c` at vertex `v`.
    pub fn volume_at(&self, c: usize, v: usize, mesh: &MeshTriplet) -> f64 {
        let k = mesh.cells[c].iter().position(|&x| x == v).expect("vertex of cell");
        self.subcell_volume[c][k]
    }

    /// Centroid of the subcell (c, v).
    pub fn centroid_at(&self, c: usize, v: usize, mesh: &MeshTriplet) -> Vec2 {
        let k = mesh.cells[c].iter().position(|&x| x == v).expect("vertex of cell");
        self.subcell_centroid[c][k]
    }

    /// Corner points of the subcell quadrilateral (c, v):
    /// [x_K, mid(face1), x_s, mid(face2)] in CCW order.
    pub fn subcell_polygon(&self, c: usize, v: usize, mesh: &MeshTriplet) -> [Vec2; 4] {
        subcell_polygon(mesh, c, v)
    }
}

fn subcell_polygon(mesh: &MeshTriplet, c: usize, v: usize) -> [Vec2; 4] {
    let [f1, f2] = mesh.corner_faces(c, v).expect("valid corner");
    let xk = mesh.cell_centers[c];
    let xs = mesh.vertices[v];
    let m1 = mesh.face_midpoint(f1);
    let m2 = mesh.face_midpoint(f2);
    // Order so the quadrilateral is CCW.
    let quad = [xk, m1, xs, m2];
    if polygon_signed_area(&quad) > 0.0 {
        quad
    } else {
        [xk, m2, xs, m1]
    }
}

/// Compute subcell volumes, subface areas, quadrature points and midpoints.
pub fn compute_geometry(mesh: &MeshTriplet) -> Result<SubcellGeometry, MeshError> {
    compute_geometry_with(mesh, QuadratureRule::TwoPoint)
}

pub fn compute_geometry_with(
    mesh: &MeshTriplet,
    rule: QuadratureRule,
) -> Result<SubcellGeometry, MeshError> {
    let mut subcell_volume = Vec::with_capacity(mesh.n_cells());
    let mut subcell_centroid = Vec::with_capacity(mesh.n_cells());
    for (c, poly) in mesh.cells.iter().enumerate() {
        let mut vols = Vec::with_capacity(poly.len());
        let mut cents = Vec::with_capacity(poly.len());
        for &v in poly {
            let quad = subcell_polygon(mesh, c, v);
            let a = polygon_signed_area(&quad);
            if a <= 0.0 {
                return Err(MeshError::DegenerateSubcell { cell: c, vertex: v });
            }
            vols.push(a);
            cents.push(polygon_centroid(&quad));
        }
        let sum: f64 = vols.iter().sum();
        let area = mesh.cell_areas[c];
        if ((sum - area) / area).abs() > 1e-12 {
            return Err(MeshError::SubcellPartition { cell: c, sum, area });
        }
        subcell_volume.push(vols);
        subcell_centroid.push(cents);
    }

    let mut subface = Vec::with_capacity(mesh.n_faces());
    for (fi, f) in mesh.faces.iter().enumerate() {
        let mk = |e: usize| -> Subface {
            let vs = f.verts[e];
            let vo = f.verts[1 - e];
            let xs = mesh.vertices[vs];
            let xo = mesh.vertices[vo];
            let mid_face = 0.5 * (xs + xo);
            let area = (mid_face - xs).norm();
            let gauss: Vec<(Vec2, f64)> = match rule {
                QuadratureRule::TwoPoint => gauss2_on_segment(xs, mid_face).to_vec(),
                QuadratureRule::Reduced { eta } => vec![(xs + eta * (xo - xs), area)],
            };
            let wsum: f64 = gauss.iter().map(|g| g.1).sum();
            let midpoint = gauss.iter().map(|(x, w)| *w * *x).sum::<Vec2>() / wsum;
            Subface { face: fi, vertex: vs, area, midpoint, gauss }
        };
        subface.push([mk(0), mk(1)]);
    }

    Ok(SubcellGeometry { subcell_volume, subcell_centroid, subface, rule })
}

#[cfg(test)]
mod tests {
    use super::generate::{generate_mesh, MeshKind};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cartesian_2x2_counts() {
        let mesh = generate_mesh(MeshKind::Cartesian, 2, 2, 0.0, 0).unwrap();
        assert_eq!(mesh.n_cells(), 4);
        assert_eq!(mesh.n_faces(), 12);
        assert_eq!(mesh.n_vertices(), 9);
    }

    #[test]
    fn cartesian_1x1_subcell_quarters() {
        let mesh = generate_mesh(MeshKind::Cartesian, 1, 1, 0.0, 0).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        for k in 0..4 {
            assert_relative_eq!(geo.subcell_volume[0][k], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn equilateral_rhombus_two_cells() {
        let mesh = generate_mesh(MeshKind::EquilateralTri, 1, 1, 0.0, 0).unwrap();
        assert_eq!(mesh.n_cells(), 2);
        let geo = compute_geometry(&mesh).unwrap();
        let tri_area = 3.0f64.sqrt() / 4.0;
        for c in 0..2 {
            assert_relative_eq!(mesh.cell_areas[c], tri_area, max_relative = 1e-14);
            for k in 0..3 {
                // Shoelace over each subcell quadrilateral gives exactly a third.
                assert_relative_eq!(geo.subcell_volume[c][k], tri_area / 3.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn right_triangle_corner_subcell_area() {
        // Unit right triangle (0,0),(1,0),(0,1); subcell at (0,0) has area 1/6
        // (shoelace over (0,0),(1/2,0),(1/3,1/3),(0,1/2)).
        let verts = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let cells = vec![vec![0, 1, 2]];
        let mut tags = HashMap::new();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            tags.insert((a, b), BoundaryTag::Dirichlet);
        }
        let mesh = MeshTriplet::from_cells(verts, cells, &tags).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        assert_relative_eq!(geo.subcell_volume[0][0], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn partition_of_unity_all_generators() {
        for kind in [
            MeshKind::Cartesian,
            MeshKind::Triangulated,
            MeshKind::PerturbedQuad,
            MeshKind::EquilateralTri,
            MeshKind::HexagonalDual,
        ] {
            let pert = if kind == MeshKind::PerturbedQuad { 0.2 } else { 0.0 };
            let mesh = generate_mesh(kind, 3, 3, pert, 42).unwrap();
            let geo = compute_geometry(&mesh).unwrap();
            for c in 0..mesh.n_cells() {
                let sum: f64 = geo.subcell_volume[c].iter().sum();
                assert_relative_eq!(sum, mesh.cell_areas[c], max_relative = 1e-12);
            }
            // Subface areas partition each face.
            for fi in 0..mesh.n_faces() {
                let sum = geo.subface[fi][0].area + geo.subface[fi][1].area;
                assert_relative_eq!(sum, mesh.face_measure(fi), max_relative = 1e-12);
            }
            // Quadrature weights sum to the subface measure.
            for fi in 0..mesh.n_faces() {
                for e in 0..2 {
                    let s: f64 = geo.subface[fi][e].gauss.iter().map(|g| g.1).sum();
                    assert_relative_eq!(s, geo.subface[fi][e].area, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn normals_outward_and_antisymmetric() {
        let mesh = generate_mesh(MeshKind::PerturbedQuad, 4, 3, 0.25, 7).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        for (fi, f) in mesh.faces.iter().enumerate() {
            for e in 0..2 {
                let sf = &geo.subface[fi][e];
                for c in f.cells() {
                    let n = mesh.outward_normal(fi, c);
                    assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-14);
                    assert!((sf.midpoint - mesh.cell_centers[c]).dot(&n) > 0.0);
                }
            }
            if let Some(r) = f.right {
                let nl = mesh.outward_normal(fi, f.left);
                let nr = mesh.outward_normal(fi, r);
                assert_relative_eq!((nl + nr).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn interior_faces_have_two_cells() {
        let mesh = generate_mesh(MeshKind::Triangulated, 3, 3, 0.0, 0).unwrap();
        for (fi, f) in mesh.faces.iter().enumerate() {
            if mesh.boundary_tags[fi].is_none() {
                assert!(f.right.is_some());
            } else {
                assert!(f.right.is_none());
            }
        }
    }

    #[test]
    fn two_faces_per_cell_corner() {
        let mesh = generate_mesh(MeshKind::HexagonalDual, 2, 2, 0.0, 0).unwrap();
        for (c, poly) in mesh.cells.iter().enumerate() {
            for &v in poly {
                assert!(mesh.corner_faces(c, v).is_ok());
            }
        }
    }

    #[test]
    fn cells_partition_domain_area() {
        // Boundary-loop shoelace equals the sum of cell areas when orientation
        // is consistent.
        let mesh = generate_mesh(MeshKind::PerturbedQuad, 5, 4, 0.3, 3).unwrap();
        let mut boundary_sum = 0.0;
        for (fi, f) in mesh.faces.iter().enumerate() {
            if mesh.boundary_tags[fi].is_some() {
                // Boundary faces are traversed CCW by their single (left) cell,
                // hence CCW around the domain.
                let a = mesh.vertices[f.verts[0]];
                let b = mesh.vertices[f.verts[1]];
                boundary_sum += 0.5 * (a.x * b.y - b.x * a.y);
            }
        }
        assert_relative_eq!(boundary_sum, mesh.total_area(), max_relative = 1e-12);
    }
}

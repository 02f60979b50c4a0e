//! Numerical verification of the local stability condition and the mesh
//! counting criteria, plus a global coercivity estimate.
//!
//! Per vertex, theta_2 is the smallest generalized eigenvalue of the pencil
//! formed by the symmetrized local form b(u, avg(u)) against the energy plus
//! jump seminorm, restricted to the projected space modulo rigid motions. A
//! vanishing minimum of the energy-versus-jump pencil signals a direction
//! whose jumps the mechanical energy does not control (the failure mode of
//! full quadrature on equilateral triangles).

use crate::fields::MaterialField;
use crate::geometry::{outer, reflect_across_line, Mat2, Vec2};
use crate::global::GlobalSystem;
use crate::local::{forms::grad_dofs, forms::energy_rows, Region, VertexSolution};
use crate::mesh::{BoundaryTag, MeshTriplet, SubcellGeometry};
use crate::fields::CellField;
use crate::pencil::{orthogonal_complement, pencil_extremes};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

/// Stability figures of one vertex.
#[derive(Clone, Debug, Serialize)]
pub struct VertexReport {
    pub vertex_id: usize,
    /// Minimum eigenvalue of the local coercivity pencil; `None` when the
    /// quotient space is empty (e.g. a single-cell corner with all-Dirichlet
    /// faces).
    pub theta2: Option<f64>,
    pub theta1: f64,
    pub vertex_symmetric: bool,
    /// Smallest eigenvalue of S + S^T over the subcells at this vertex.
    pub s_eig_min: f64,
    /// A projected direction exists whose jump norm is not controlled by the
    /// mechanical energy.
    pub uncontrolled_jump: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalSummary {
    pub theta2_min: Option<f64>,
    pub theta1_max: f64,
    /// Minimum eigenvalue of the symmetrized operator against the |.|_T Gram
    /// matrix; `None` when the eigensolve is unavailable at this size.
    pub global_estimate: Option<f64>,
    pub card_vertices: usize,
    pub d_card_cells: usize,
    pub audit_pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub per_vertex: Vec<VertexReport>,
    pub global: GlobalSummary,
}

/// Tolerance below which theta_2 counts as an audit failure.
pub const THETA2_TOL: f64 = 1e-10;

/// Relative tolerance for the uncontrolled-jump detection.
pub const JUMP_CONTROL_TOL: f64 = 1e-10;

/// The local coercivity pencil at one vertex: returns (theta2, uncontrolled).
pub fn check_local_coercivity(sol: &VertexSolution, mats: &MaterialField) -> (Option<f64>, bool) {
    let region = &sol.region;
    let nu = region.n_coarse();
    let q = region.rigid_complement();
    if q.ncols() == 0 {
        return (None, false);
    }

    let aform = local_form_matrix(sol);
    let asym = 0.5 * (&aform + aform.transpose());

    let erows = energy_rows_region(region, &sol.grad_map);
    let emat = erows.transpose() * &erows;
    let jrows = region.weighted_jump_rows(&sol.grad_map);
    let jmat = jrows.transpose() * &jrows;

    let a_red = q.transpose() * &asym * &q;
    let b_red = q.transpose() * (&emat + &jmat) * &q;
    let theta2 = pencil_extremes(&a_red, &b_red, 1e-12).map(|(lo, _)| lo);

    // Energy-versus-jump pencil: a zero minimum means jumps escape the
    // energy's control. Vacuous when the projected jumps vanish entirely.
    let e_red = q.transpose() * &emat * &q;
    let j_red = q.transpose() * &jmat * &q;
    let jump_scale = SymmetricEigen::new(j_red.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let energy_scale = SymmetricEigen::new(e_red.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let mat_scale = region
        .cells
        .iter()
        .map(|rc| 2.0 * rc.mu + rc.lambda)
        .fold(0.0f64, f64::max);
    let uncontrolled = if jump_scale <= 1e-16 * energy_scale.max(1e-300) {
        false
    } else {
        match pencil_extremes(&e_red, &j_red, 1e-12) {
            Some((lo, _)) => lo <= JUMP_CONTROL_TOL * mat_scale,
            None => false,
        }
    };
    let _ = nu;
    let _ = mats;
    (theta2, uncontrolled)
}

/// Matrix of the local form (u, w) -> b(u, avg w): traction representation
/// summed over subface sides.
fn local_form_matrix(sol: &VertexSolution) -> DMatrix<f64> {
    let region = &sol.region;
    let ncomp = region.ncomp;
    let nu = region.n_coarse();
    let mut f = DMatrix::zeros(nu, nu);
    for (si, sf) in region.subfaces.iter().enumerate() {
        let avg = region.subface_avg_map(&sol.grad_map, si);
        for (side_idx, side) in sf.sides.iter().enumerate() {
            let (map, _) = &sol.tractions[si][side_idx];
            // test factor: avg_w - w at the side cell
            let mut test = avg.clone();
            for comp in 0..ncomp {
                test[(comp, ncomp * side.local_cell + comp)] -= 1.0;
            }
            f += test.transpose() * map;
        }
    }
    f
}

/// Stacked energy rows of the projected field over the region subcells.
fn energy_rows_region(region: &Region, grad_map: &DMatrix<f64>) -> DMatrix<f64> {
    let dd = grad_dofs(region.ncomp);
    let nu = region.n_coarse();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for (i, rc) in region.cells.iter().enumerate() {
        let er = energy_rows(method_of(region), rc.mu, rc.lambda, rc.volume);
        blocks.push(er * grad_map.rows(dd * i, dd));
    }
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, nu);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(&b);
        at += b.nrows();
    }
    out
}

// The energy density depends only on the component count here; vector
// variants share the symmetric-gradient energy of the stability condition.
fn method_of(region: &Region) -> crate::variants::Method {
    if region.ncomp == 1 {
        crate::variants::Method::ScalarMpfa
    } else {
        crate::variants::Method::MpsaFull
    }
}

/// Reflection symmetry of the subcell (c, v) across the line through the cell
/// center and the vertex.
pub fn check_vertex_symmetry(mesh: &MeshTriplet, geo: &SubcellGeometry, c: usize, v: usize) -> bool {
    let quad = geo.subcell_polygon(c, v, mesh);
    let xk = mesh.cell_centers[c];
    let xs = mesh.vertices[v];
    let dir = xs - xk;
    let tol = 1e-9 * mesh.cell_diameter(c);
    // Corners are [x_K, mid1, x_s, mid2]; symmetry swaps the two midpoints.
    let m1 = quad[1];
    let m2 = quad[3];
    (reflect_across_line(m1, xk, dir) - m2).norm() <= tol
}

/// Eigenvalues of S + S^T with S = sum m_sigma^s (xbar - x_K) outer n.
pub fn s_matrix_eigs(mesh: &MeshTriplet, geo: &SubcellGeometry, c: usize, v: usize) -> [f64; 2] {
    let mut s = Mat2::zeros();
    for fi in mesh.corner_faces(c, v).expect("valid corner") {
        let sf = geo.subface_at(fi, v, mesh);
        let n = mesh.outward_normal(fi, c);
        s += sf.area * outer(sf.midpoint - mesh.cell_centers[c], n);
    }
    let sym = s + s.transpose();
    let eig = nalgebra::SymmetricEigen::new(sym);
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    [a.min(b), a.max(b)]
}

/// Per-macrocell counting check d card(T_k) > card(V_k) with closed vertex
/// counts, for a partition assigning each cell to one macrocell.
pub fn check_locally_underconstrained(
    mesh: &MeshTriplet,
    partition: &[usize],
) -> Result<Vec<bool>, String> {
    if partition.len() != mesh.n_cells() {
        return Err(format!(
            "partition covers {} cells, mesh has {}",
            partition.len(),
            mesh.n_cells()
        ));
    }
    let nmac = partition.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut cells_in = vec![0usize; nmac];
    let mut verts_in: Vec<std::collections::BTreeSet<usize>> =
        vec![std::collections::BTreeSet::new(); nmac];
    for (c, &k) in partition.iter().enumerate() {
        cells_in[k] += 1;
        for &v in &mesh.cells[c] {
            verts_in[k].insert(v);
        }
    }
    Ok((0..nmac)
        .map(|k| 2 * cells_in[k] > verts_in[k].len())
        .collect())
}

/// Structured macro partition: bin cell centers into an mx x my grid over the
/// bounding box.
pub fn structured_partition(mesh: &MeshTriplet, mx: usize, my: usize) -> Vec<usize> {
    let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
    for v in &mesh.vertices {
        lo.x = lo.x.min(v.x);
        lo.y = lo.y.min(v.y);
        hi.x = hi.x.max(v.x);
        hi.y = hi.y.max(v.y);
    }
    let span = hi - lo;
    mesh.cell_centers
        .iter()
        .map(|c| {
            let ix = (((c.x - lo.x) / span.x * mx as f64) as usize).min(mx - 1);
            let iy = (((c.y - lo.y) / span.y * my as f64) as usize).min(my - 1);
            iy * mx + ix
        })
        .collect()
}

/// Minimum eigenvalue of the symmetric part of the assembled operator against
/// the |.|_T Gram matrix, modulo rigid motions for pure-Neumann problems.
/// `None` when the dense eigensolve is out of reach.
pub fn estimate_global_coercivity(mesh: &MeshTriplet, sys: &GlobalSystem) -> Option<f64> {
    let n = sys.matrix.n;
    if n > 4000 {
        return None;
    }
    let m = sys.matrix.to_dense();
    let msym = 0.5 * (&m + m.transpose());
    let gram = tnorm_gram(mesh, sys.ncomp);
    if sys.pure_neumann {
        let q = orthogonal_complement(&sys.rigid_basis(), n);
        let a = q.transpose() * &msym * &q;
        let b = q.transpose() * &gram * &q;
        pencil_extremes(&a, &b, 1e-12).map(|(lo, _)| lo)
    } else {
        pencil_extremes(&msym, &gram, 1e-12).map(|(lo, _)| lo)
    }
}

/// Dense Gram matrix of the global |.|_T seminorm on cell fields.
fn tnorm_gram(mesh: &MeshTriplet, ncomp: usize) -> DMatrix<f64> {
    let n = ncomp * mesh.n_cells();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let m = mesh.face_measure(fi);
        let dirichlet = mesh.boundary_tags[fi] == Some(BoundaryTag::Dirichlet);
        let cells: Vec<usize> = f.cells().collect();
        let denom: f64 = cells.iter().map(|&c| 1.0 / mesh.center_face_distance(fi, c)).sum();
        for &c in &cells {
            let d = mesh.center_face_distance(fi, c);
            let w = (m / d).sqrt();
            for comp in 0..ncomp {
                let mut row = DVector::zeros(n);
                if !dirichlet {
                    for &k in &cells {
                        let dk = mesh.center_face_distance(fi, k);
                        row[ncomp * k + comp] += (1.0 / dk) / denom;
                    }
                }
                row[ncomp * c + comp] -= 1.0;
                rows.push(row * w);
            }
        }
    }
    let mut gram = DMatrix::zeros(n, n);
    for r in rows {
        gram += &r * r.transpose();
    }
    gram
}

/// Run the full audit: per-vertex stability figures plus the global summary.
pub fn audit(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    solutions: &[VertexSolution],
    sys: Option<&GlobalSystem>,
) -> CoercivityReport {
    let per_vertex: Vec<VertexReport> = solutions
        .iter()
        .map(|sol| {
            let v = sol.region.vertex;
            let (theta2, uncontrolled) = check_local_coercivity(sol, mats);
            let mut symmetric = true;
            let mut s_min = f64::INFINITY;
            for &c in &mesh.cells_of_vertex[v] {
                symmetric &= check_vertex_symmetry(mesh, geo, c, v);
                s_min = s_min.min(s_matrix_eigs(mesh, geo, c, v)[0]);
            }
            VertexReport {
                vertex_id: v,
                theta2,
                theta1: sol.theta1,
                vertex_symmetric: symmetric,
                s_eig_min: s_min,
                uncontrolled_jump: uncontrolled,
            }
        })
        .collect();

    let theta2_min = per_vertex
        .iter()
        .filter_map(|r| r.theta2)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let theta1_max = per_vertex.iter().map(|r| r.theta1).fold(0.0f64, f64::max);
    let audit_pass = per_vertex.iter().all(|r| {
        r.theta2.map_or(true, |t| t > THETA2_TOL) && !r.uncontrolled_jump
    });
    let global_estimate = sys.and_then(|s| estimate_global_coercivity(mesh, s));

    CoercivityReport {
        per_vertex,
        global: GlobalSummary {
            theta2_min,
            theta1_max,
            global_estimate,
            card_vertices: mesh.n_vertices(),
            d_card_cells: 2 * mesh.n_cells(),
            audit_pass,
        },
    }
}

/// Rigid body fields sampled at cell centers (two translations plus the
/// rotation about the area centroid).
pub fn rigid_body_fields(mesh: &MeshTriplet) -> [CellField; 3] {
    let total: f64 = mesh.cell_areas.iter().sum();
    let centroid: Vec2 = mesh
        .cell_areas
        .iter()
        .zip(&mesh.cell_centers)
        .map(|(&a, &x)| a * x)
        .sum::<Vec2>()
        / total;
    let n = mesh.n_cells();
    let mut tx = CellField::zeros(n, 2);
    let mut ty = CellField::zeros(n, 2);
    let mut rot = CellField::zeros(n, 2);
    for c in 0..n {
        tx.data[2 * c] = 1.0;
        ty.data[2 * c + 1] = 1.0;
        rot.data[2 * c] = -(mesh.cell_centers[c].y - centroid.y);
        rot.data[2 * c + 1] = mesh.cell_centers[c].x - centroid.x;
    }
    [tx, ty, rot]
}

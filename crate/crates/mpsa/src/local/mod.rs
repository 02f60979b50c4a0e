//! Per-vertex interaction regions and the local constrained minimization
//! that condenses subface tractions into cell-centered stress weights.
//!
//! At each vertex the unknowns are one gradient block per adjacent subcell;
//! subface values are the affine reconstructions of those blocks, which
//! enforces the piecewise-linear constraint analytically. The remaining
//! freedom minimizes the weighted jump energy at the subface quadrature
//! points subject to traction continuity across interior subfaces, Dirichlet
//! average pinning and Neumann traction data.

pub mod forms;

use crate::fields::{MaterialField, ProblemData};
use crate::geometry::{Mat2, Vec2};
use crate::mesh::{BoundaryTag, MeshTriplet, SubcellGeometry};
use crate::pencil::{orthogonal_complement, pencil_extremes};
use crate::variants::{Method, VariantConfig};
use forms::{grad_dofs, reconstruction_rows, traction_rows};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocalError {
    #[error("degenerate subcell at cell {cell}, vertex {vertex}: gradient basis is singular")]
    SingularGradientBasis { cell: usize, vertex: usize },
    #[error("local problem ill-posed at vertex {vertex}")]
    IllPosed { vertex: usize },
    #[error("face {face} has no boundary tag")]
    MissingTag { face: usize },
}

/// One cell of an interaction region.
#[derive(Clone, Debug)]
pub struct RegionCell {
    /// Global cell id.
    pub cell: usize,
    pub center: Vec2,
    /// Subcell volume m_K^s.
    pub volume: f64,
    /// Indices into `Region::subfaces` of the two faces at the vertex.
    pub subfaces: [usize; 2],
    /// Gradient basis vectors dual to the subface midpoints (rows of the
    /// inverse transpose of the midpoint offset matrix).
    pub g: [Vec2; 2],
    pub mu: f64,
    pub lambda: f64,
}

/// One side of a subface (a cell adjacent to the face).
#[derive(Clone, Copy, Debug)]
pub struct SubfaceSide {
    /// Index into `Region::cells`.
    pub local_cell: usize,
    /// Outward unit normal with respect to that cell.
    pub normal: Vec2,
    /// Distance from the cell center to the face line.
    pub dist: f64,
}

#[derive(Clone, Debug)]
pub struct RegionSubface {
    pub face: usize,
    pub tag: Option<BoundaryTag>,
    /// Subface measure m_sigma^s.
    pub area: f64,
    /// Quadrature-weighted midpoint.
    pub midpoint: Vec2,
    pub gauss: Vec<(Vec2, f64)>,
    /// Adjacent sides ordered by ascending local cell index.
    pub sides: Vec<SubfaceSide>,
    /// Jump stabilization weight.
    pub alpha: f64,
}

/// The patch of subcells sharing one vertex, with everything the local solve
/// needs.
#[derive(Clone, Debug)]
pub struct Region {
    pub vertex: usize,
    pub position: Vec2,
    pub cells: Vec<RegionCell>,
    pub subfaces: Vec<RegionSubface>,
    pub ncomp: usize,
}

impl Region {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Number of coarse (cell value) unknowns.
    pub fn n_coarse(&self) -> usize {
        self.ncomp * self.cells.len()
    }

    /// Number of gradient unknowns.
    pub fn n_grad(&self) -> usize {
        grad_dofs(self.ncomp) * self.cells.len()
    }

    pub fn local_cell_index(&self, cell: usize) -> Option<usize> {
        self.cells.binary_search_by_key(&cell, |rc| rc.cell).ok()
    }

}

/// Build the interaction region at `vertex`.
pub fn extract_region(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    variant: &VariantConfig,
    vertex: usize,
) -> Result<Region, LocalError> {
    let ncomp = variant.method.ncomp();
    let position = mesh.vertices[vertex];
    let cell_ids = &mesh.cells_of_vertex[vertex];

    let mut subfaces = Vec::new();
    let mut face_to_sf = std::collections::HashMap::new();
    for &fi in &mesh.faces_of_vertex[vertex] {
        let sfg = geo.subface_at(fi, vertex, mesh);
        let tag = mesh.boundary_tags[fi];
        if mesh.faces[fi].is_boundary() && tag.is_none() {
            return Err(LocalError::MissingTag { face: fi });
        }
        let mut sides: Vec<SubfaceSide> = mesh.faces[fi]
            .cells()
            .map(|c| SubfaceSide {
                local_cell: cell_ids.binary_search(&c).expect("face cell adjacent to vertex"),
                normal: mesh.outward_normal(fi, c),
                dist: mesh.center_face_distance(fi, c),
            })
            .collect();
        sides.sort_by_key(|s| s.local_cell);
        let adj: Vec<usize> = mesh.faces[fi].cells().collect();
        let alpha = variant.alpha(mats, &adj);
        face_to_sf.insert(fi, subfaces.len());
        subfaces.push(RegionSubface {
            face: fi,
            tag,
            area: sfg.area,
            midpoint: sfg.midpoint,
            gauss: sfg.gauss.clone(),
            sides,
            alpha,
        });
    }

    let mut cells = Vec::with_capacity(cell_ids.len());
    for &c in cell_ids {
        let [f1, f2] = mesh.corner_faces(c, vertex).expect("validated corner");
        let sf1 = face_to_sf[&f1];
        let sf2 = face_to_sf[&f2];
        let center = mesh.cell_centers[c];
        // Gradient basis: rows of V are the midpoint offsets; g rows are the
        // rows of the inverse transpose, so that sum (xbar - x_K) outer g = I.
        let v = Mat2::from_rows(&[
            (subfaces[sf1].midpoint - center).transpose(),
            (subfaces[sf2].midpoint - center).transpose(),
        ]);
        let vinv = v
            .try_inverse()
            .ok_or(LocalError::SingularGradientBasis { cell: c, vertex })?;
        let vit = vinv.transpose();
        cells.push(RegionCell {
            cell: c,
            center,
            volume: geo.volume_at(c, vertex, mesh),
            subfaces: [sf1, sf2],
            g: [Vec2::new(vit.m11, vit.m12), Vec2::new(vit.m21, vit.m22)],
            mu: mats.mu[c],
            lambda: mats.lambda[c],
        });
    }

    Ok(Region { vertex, position, cells, subfaces, ncomp })
}

/// Condensed output of one local solve.
#[derive(Clone, Debug)]
pub struct VertexSolution {
    pub region: Region,
    /// Gradients as a linear map of the coarse values: z = grad_map u + grad_data.
    pub grad_map: DMatrix<f64>,
    pub grad_data: DVector<f64>,
    /// Per (subface, side): variant traction as (map, data) with `map` of
    /// shape ncomp x n_coarse. Interior pairs satisfy exact action-reaction.
    pub tractions: Vec<Vec<(DMatrix<f64>, DVector<f64>)>>,
    /// Operator norm of the projection: |proj u|_D / |u|_T maximized.
    pub theta1: f64,
    /// Jump residual operator: rows are sqrt(weight) * jump components at the
    /// quadrature points; jump energy of coarse values u is
    /// |jump_op u + jump_data|^2.
    pub jump_op: DMatrix<f64>,
    pub jump_data: DVector<f64>,
    /// Least-squares residual of the boundary-data constraint column (zero
    /// unless the data is incompatible with a rank-deficient corner).
    pub data_residual: f64,
}

impl VertexSolution {
    /// Gradient block of local cell `i` for coarse values `u`.
    pub fn gradient(&self, i: usize, u: &DVector<f64>) -> Mat2 {
        let dd = grad_dofs(self.region.ncomp);
        let z = self.grad_map.rows(i * dd, dd) * u + self.grad_data.rows(i * dd, dd);
        if self.region.ncomp == 2 {
            Mat2::new(z[0], z[1], z[2], z[3])
        } else {
            Mat2::new(z[0], z[1], 0.0, 0.0)
        }
    }

    pub fn jump_energy(&self, u: &DVector<f64>) -> f64 {
        (&self.jump_op * u + &self.jump_data).norm_squared()
    }
}

struct LocalSystem {
    nz: usize,
    a2: DMatrix<f64>,       // 2 A = 2 D^T W D
    cmat: DMatrix<f64>,     // constraints
    rhs_top: DMatrix<f64>,  // -2 D^T W Dc per coarse column, plus data column
    rhs_bot: DMatrix<f64>,  // constraint right-hand sides per column
    jump_rows: DMatrix<f64>, // sqrt(w) D
    jump_coarse: DMatrix<f64>, // sqrt(w) Dc
    trac_rows: Vec<Vec<DMatrix<f64>>>, // per (subface, side), ncomp x nz
}

fn build_system(region: &Region, method: Method, data: Option<&ProblemData>) -> LocalSystem {
    let ncomp = region.ncomp;
    let dd = grad_dofs(ncomp);
    let m = region.n_cells();
    let nz = dd * m;
    let nu = ncomp * m;

    let mut c_rows: Vec<DVector<f64>> = Vec::new();
    let mut h_rows: Vec<DVector<f64>> = Vec::new(); // coarse coupling of constraint rhs
    let mut h_data: Vec<f64> = Vec::new();
    let mut d_rows: Vec<DVector<f64>> = Vec::new();
    let mut dc_rows: Vec<DVector<f64>> = Vec::new();
    let mut w: Vec<f64> = Vec::new();

    let mut trac_rows: Vec<Vec<DMatrix<f64>>> = Vec::new();

    for sf in &region.subfaces {
        let mut per_side = Vec::new();
        for side in &sf.sides {
            let rc = &region.cells[side.local_cell];
            let tr = traction_rows(method, rc.mu, rc.lambda, sf.area, side.normal);
            let mut full = DMatrix::zeros(ncomp, nz);
            full.view_mut((0, dd * side.local_cell), (ncomp, dd)).copy_from(&tr);
            per_side.push(full);
        }
        trac_rows.push(per_side);
    }

    for (si, sf) in region.subfaces.iter().enumerate() {
        match sf.tag {
            None => {
                // Traction continuity: sum of side tractions vanishes.
                for comp in 0..ncomp {
                    let mut row = DVector::zeros(nz);
                    for side_rows in &trac_rows[si] {
                        row += side_rows.row(comp).transpose();
                    }
                    c_rows.push(row);
                    h_rows.push(DVector::zeros(nu));
                    h_data.push(0.0);
                }
                // Jump rows at each quadrature point.
                let r = &sf.sides[0];
                let l = &sf.sides[1];
                for &(x, wq) in &sf.gauss {
                    let er = reconstruction_rows(ncomp, x - region.cells[r.local_cell].center);
                    let el = reconstruction_rows(ncomp, x - region.cells[l.local_cell].center);
                    for comp in 0..ncomp {
                        let mut drow = DVector::zeros(nz);
                        drow.rows_mut(dd * r.local_cell, dd)
                            .add_assign(&er.row(comp).transpose());
                        drow.rows_mut(dd * l.local_cell, dd)
                            .sub_assign(&el.row(comp).transpose());
                        let mut dcrow = DVector::zeros(nu);
                        dcrow[ncomp * r.local_cell + comp] = 1.0;
                        dcrow[ncomp * l.local_cell + comp] = -1.0;
                        d_rows.push(drow);
                        dc_rows.push(dcrow);
                        w.push(sf.alpha * wq / sf.area);
                    }
                }
            }
            Some(BoundaryTag::Dirichlet) => {
                // Pin the reconstruction average to the quadrature average of
                // the boundary data: E(xbar - x_K) z = gbar - u_K.
                let side = &sf.sides[0];
                let rc = &region.cells[side.local_cell];
                let e = reconstruction_rows(ncomp, sf.midpoint - rc.center);
                let gbar = data.map(|d| {
                    let mut acc = Vec2::zeros();
                    let mut ws = 0.0;
                    for &(x, wq) in &sf.gauss {
                        acc += wq * (d.dirichlet)(x);
                        ws += wq;
                    }
                    acc / ws
                });
                for comp in 0..ncomp {
                    let mut row = DVector::zeros(nz);
                    row.rows_mut(dd * side.local_cell, dd)
                        .copy_from(&e.row(comp).transpose());
                    c_rows.push(row);
                    let mut h = DVector::zeros(nu);
                    h[ncomp * side.local_cell + comp] = -1.0;
                    h_rows.push(h);
                    h_data.push(gbar.map(|g| if comp == 0 { g.x } else { g.y }).unwrap_or(0.0));
                }
            }
            Some(BoundaryTag::Neumann) => {
                // Variant traction equals the subface integral of the data.
                let side = &sf.sides[0];
                let gint = data.map(|d| {
                    let mut acc = Vec2::zeros();
                    for &(x, wq) in &sf.gauss {
                        acc += wq * (d.neumann)(x, side.normal);
                    }
                    acc
                });
                for comp in 0..ncomp {
                    c_rows.push(trac_rows[si][0].row(comp).transpose());
                    h_rows.push(DVector::zeros(nu));
                    h_data.push(gint.map(|g| if comp == 0 { g.x } else { g.y }).unwrap_or(0.0));
                }
            }
        }
    }

    let nc = c_rows.len();
    let nj = d_rows.len();
    let mut cmat = DMatrix::zeros(nc, nz);
    let mut hmat = DMatrix::zeros(nc, nu);
    for (i, row) in c_rows.iter().enumerate() {
        cmat.row_mut(i).copy_from(&row.transpose());
        hmat.row_mut(i).copy_from(&h_rows[i].transpose());
    }
    let mut dmat = DMatrix::zeros(nj, nz);
    let mut dcmat = DMatrix::zeros(nj, nu);
    for i in 0..nj {
        dmat.row_mut(i).copy_from(&d_rows[i].transpose());
        dcmat.row_mut(i).copy_from(&dc_rows[i].transpose());
    }
    let sqrt_w = DVector::from_iterator(nj, w.iter().map(|x| x.sqrt()));
    let mut jump_rows = dmat.clone();
    let mut jump_coarse = dcmat.clone();
    for i in 0..nj {
        let s = sqrt_w[i];
        jump_rows.row_mut(i).scale_mut(s);
        jump_coarse.row_mut(i).scale_mut(s);
    }
    let a2 = 2.0 * jump_rows.transpose() * &jump_rows;

    // Right-hand sides: one column per coarse dof, plus one data column.
    let mut rhs_top = DMatrix::zeros(nz, nu + 1);
    let mut rhs_bot = DMatrix::zeros(nc, nu + 1);
    let m2 = -2.0 * jump_rows.transpose() * &jump_coarse;
    rhs_top.view_mut((0, 0), (nz, nu)).copy_from(&m2);
    rhs_bot.view_mut((0, 0), (nc, nu)).copy_from(&hmat);
    for i in 0..nc {
        rhs_bot[(i, nu)] = h_data[i];
    }

    LocalSystem { nz, a2, cmat, rhs_top, rhs_bot, jump_rows, jump_coarse, trac_rows }
}

/// Solve the local mixed problem at a vertex: returns the projection
/// (gradients), condensed traction weights, theta_1 and jump diagnostics.
pub fn solve_vertex(
    region: Region,
    data: Option<&ProblemData>,
    method: Method,
) -> Result<VertexSolution, LocalError> {
    // The finite difference relative shares the stress-continuity local
    // solves verbatim; only the global pairing differs.
    let method = if method == Method::FdSymmetric { Method::MpsaFull } else { method };
    let sys = build_system(&region, method, data);
    let nz = sys.nz;
    let nc = sys.cmat.nrows();
    let nu = region.n_coarse();

    // KKT system with full pivoting is the fast path; it is singular whenever
    // the continuity constraints carry a structural redundancy (every
    // interior vertex of a symmetric mesh does), in which case the primal
    // solution is recovered by the null-space method.
    let mut kkt = DMatrix::zeros(nz + nc, nz + nc);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&sys.a2);
    kkt.view_mut((0, nz), (nz, nc)).copy_from(&sys.cmat.transpose());
    kkt.view_mut((nz, 0), (nc, nz)).copy_from(&sys.cmat);
    let mut rhs = DMatrix::zeros(nz + nc, nu + 1);
    rhs.view_mut((0, 0), (nz, nu + 1)).copy_from(&sys.rhs_top);
    rhs.view_mut((nz, 0), (nc, nu + 1)).copy_from(&sys.rhs_bot);

    let scale = kkt.amax();
    let lu = kkt.clone().full_piv_lu();
    let u_diag_min = (0..nz + nc).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    let (z_all, data_residual) = if u_diag_min > 1e-12 * scale {
        let sol = lu.solve(&rhs).ok_or(LocalError::IllPosed { vertex: region.vertex })?;
        (sol.rows(0, nz).into_owned(), 0.0)
    } else {
        solve_deficient(&region, &sys, nu)?
    };

    let grad_map = z_all.columns(0, nu).into_owned();
    let grad_data = z_all.column(nu).into_owned();

    // Condensed traction weights; interior pairs are antisymmetrized so
    // action-reaction holds exactly.
    let mut tractions: Vec<Vec<(DMatrix<f64>, DVector<f64>)>> = Vec::new();
    for (si, sf) in region.subfaces.iter().enumerate() {
        let mut per_side: Vec<(DMatrix<f64>, DVector<f64>)> = sys.trac_rows[si]
            .iter()
            .map(|tr| (tr * &grad_map, tr * &grad_data))
            .collect();
        if sf.tag.is_none() {
            let map_r = (per_side[0].0.clone() - per_side[1].0.clone()) * 0.5;
            let dat_r = (per_side[0].1.clone() - per_side[1].1.clone()) * 0.5;
            per_side[0] = (map_r.clone(), dat_r.clone());
            per_side[1] = (-map_r, -dat_r);
        }
        tractions.push(per_side);
    }

    let jump_op = &sys.jump_rows * &grad_map + &sys.jump_coarse;
    let jump_data = &sys.jump_rows * &grad_data;

    let theta1 = projection_norm(&region, &grad_map);

    Ok(VertexSolution {
        region,
        grad_map,
        grad_data,
        tractions,
        theta1,
        jump_op,
        jump_data,
        data_residual,
    })
}

/// Null-space fallback for rank-deficient local systems. Benign flat
/// directions (zero jump energy and zero traction response, e.g. the skew
/// mode of a lone all-Neumann corner cell) are resolved minimum-norm;
/// directions that change tractions make the problem ill-posed.
fn solve_deficient(
    region: &Region,
    sys: &LocalSystem,
    nu: usize,
) -> Result<(DMatrix<f64>, f64), LocalError> {
    let nz = sys.nz;
    let vertex = region.vertex;
    let svd = nalgebra::SVD::new(sys.cmat.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let eps = 1e-12 * smax;

    // Null space basis of the constraints (complement of the row space).
    let nbasis = orthogonal_complement(&sys.cmat.transpose(), nz);
    let nnull = nbasis.ncols();

    // Reduced Hessian with flat directions screened by traction response.
    let hred = nbasis.transpose() * &sys.a2 * &nbasis;
    let hred = 0.5 * (&hred + hred.transpose());
    let eig = nalgebra::SymmetricEigen::new(hred.clone());
    let hmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let trac_scale = sys
        .trac_rows
        .iter()
        .flatten()
        .map(|t| t.amax())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut hinv = DMatrix::zeros(nnull, nnull);
    for i in 0..nnull {
        let ev = eig.eigenvalues[i];
        if ev > 1e-12 * hmax.max(1e-300) {
            let vi = eig.eigenvectors.column(i);
            hinv += &vi * vi.transpose() / ev;
        } else {
            // Flat direction: acceptable only if it cannot change any
            // condensed traction output.
            let dir = &nbasis * eig.eigenvectors.column(i);
            let worst = sys
                .trac_rows
                .iter()
                .flatten()
                .map(|t| (t * &dir).amax())
                .fold(0.0f64, f64::max);
            if worst > 1e-10 * trac_scale * dir.norm() {
                return Err(LocalError::IllPosed { vertex });
            }
        }
    }

    let mut z_all = DMatrix::zeros(nz, nu + 1);
    let mut data_residual = 0.0;
    for col in 0..=nu {
        let h = sys.rhs_bot.column(col).into_owned();
        let zp = svd.solve(&h, eps).map_err(|_| LocalError::IllPosed { vertex })?;
        let resid = (&sys.cmat * &zp - &h).norm();
        let tol = 1e-10 * (smax * zp.norm() + h.norm()).max(1e-300);
        if resid > tol {
            if col < nu {
                // Structural infeasibility in a homogeneous column: the
                // condensed weights would be meaningless.
                return Err(LocalError::IllPosed { vertex });
            }
            data_residual = resid;
        }
        let top = sys.rhs_top.column(col);
        let red = nbasis.transpose() * (top - &sys.a2 * &zp);
        let y = &hinv * red;
        z_all.column_mut(col).copy_from(&(zp + &nbasis * y));
    }
    Ok((z_all, data_residual))
}

/// Operator norm theta_1 of the projection: the largest generalized singular
/// value of u -> projected field, measured |.|_D against |.|_T on the region.
fn projection_norm(region: &Region, grad_map: &DMatrix<f64>) -> f64 {
    let qd = region.dnorm_gram(grad_map);
    let qt = region.tnorm_gram();
    match pencil_extremes(&qd, &qt, 1e-12) {
        Some((_, hi)) => hi.max(0.0).sqrt(),
        None => 0.0,
    }
}

impl Region {
    /// Quadrature-averaged two-sided value of the projected field on one
    /// subface, as a linear map of the coarse values. Dirichlet subfaces are
    /// pinned to zero in the homogeneous operator.
    pub fn subface_avg_map(&self, grad_map: &DMatrix<f64>, si: usize) -> DMatrix<f64> {
        let ncomp = self.ncomp;
        let dd = grad_dofs(ncomp);
        let nu = self.n_coarse();
        let sf = &self.subfaces[si];
        let mut acc = DMatrix::zeros(ncomp, nu);
        if sf.tag == Some(BoundaryTag::Dirichlet) {
            return acc;
        }
        let wsum: f64 = sf.gauss.iter().map(|g| g.1).sum();
        for side in &sf.sides {
            for &(x, wq) in &sf.gauss {
                let e = reconstruction_rows(ncomp, x - self.cells[side.local_cell].center);
                let scale = wq / (wsum * sf.sides.len() as f64);
                for comp in 0..ncomp {
                    let mut row = e.row(comp) * grad_map.rows(dd * side.local_cell, dd);
                    row[(0, ncomp * side.local_cell + comp)] += 1.0;
                    acc.row_mut(comp).add_assign(&(row * scale));
                }
            }
        }
        acc
    }

    /// Jump rows of the projected field weighted by sqrt(m_K^s w / (d^2 m)),
    /// one block per adjacent cell of each interior subface (the jump part of
    /// the local |.|_D norm and of the coercivity denominator).
    pub fn weighted_jump_rows(&self, grad_map: &DMatrix<f64>) -> DMatrix<f64> {
        let ncomp = self.ncomp;
        let dd = grad_dofs(ncomp);
        let nu = self.n_coarse();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for sf in &self.subfaces {
            if sf.tag.is_some() {
                continue;
            }
            let r = &sf.sides[0];
            let l = &sf.sides[1];
            for side in &sf.sides {
                let rc = &self.cells[side.local_cell];
                for &(x, wq) in &sf.gauss {
                    let er = reconstruction_rows(ncomp, x - self.cells[r.local_cell].center);
                    let el = reconstruction_rows(ncomp, x - self.cells[l.local_cell].center);
                    let w2 = (rc.volume * wq / sf.area).sqrt() / side.dist;
                    for comp in 0..ncomp {
                        let mut row = (er.row(comp) * grad_map.rows(dd * r.local_cell, dd)
                            - el.row(comp) * grad_map.rows(dd * l.local_cell, dd))
                        .transpose();
                        row[ncomp * r.local_cell + comp] += 1.0;
                        row[ncomp * l.local_cell + comp] -= 1.0;
                        rows.push(row * w2);
                    }
                }
            }
        }
        rows_to_matrix(rows, nu)
    }

    /// Rows of the local |.|_D seminorm applied to the projected field, as a
    /// matrix acting on coarse values (homogeneous data).
    pub fn dnorm_rows(&self, grad_map: &DMatrix<f64>) -> DMatrix<f64> {
        let ncomp = self.ncomp;
        let nu = self.n_coarse();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for (si, sf) in self.subfaces.iter().enumerate() {
            let avg = self.subface_avg_map(grad_map, si);
            for side in &sf.sides {
                let rc = &self.cells[side.local_cell];
                let w1 = rc.volume.sqrt() / side.dist;
                for comp in 0..ncomp {
                    let mut row = -avg.row(comp).transpose();
                    row[ncomp * side.local_cell + comp] += 1.0;
                    rows.push(row * w1);
                }
            }
        }
        let mut out = rows_to_matrix(rows, nu);
        let jumps = self.weighted_jump_rows(grad_map);
        let n0 = out.nrows();
        out = out.insert_rows(n0, jumps.nrows(), 0.0);
        out.rows_mut(n0, jumps.nrows()).copy_from(&jumps);
        out
    }

    pub fn dnorm_gram(&self, grad_map: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.dnorm_rows(grad_map);
        r.transpose() * r
    }

    /// Rows of the local |.|_T seminorm on coarse values.
    pub fn tnorm_rows(&self) -> DMatrix<f64> {
        let ncomp = self.ncomp;
        let nu = self.n_coarse();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for sf in &self.subfaces {
            // Distance-weighted interpolant gamma_sigma over the face cells;
            // zero on Dirichlet faces.
            let mut gamma = DMatrix::zeros(ncomp, nu);
            if sf.tag != Some(BoundaryTag::Dirichlet) {
                let denom: f64 = sf.sides.iter().map(|s| 1.0 / s.dist).sum();
                for side in &sf.sides {
                    let wgt = (1.0 / side.dist) / denom;
                    for comp in 0..ncomp {
                        gamma[(comp, ncomp * side.local_cell + comp)] += wgt;
                    }
                }
            }
            for side in &sf.sides {
                let w = (sf.area / side.dist).sqrt();
                for comp in 0..ncomp {
                    let mut row = gamma.row(comp).transpose();
                    row[ncomp * side.local_cell + comp] -= 1.0;
                    rows.push(row * w);
                }
            }
        }
        let mut out = DMatrix::zeros(rows.len(), nu);
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from(&r.transpose());
        }
        out
    }

    pub fn tnorm_gram(&self) -> DMatrix<f64> {
        let r = self.tnorm_rows();
        r.transpose() * r
    }

    /// Sampled rigid-body basis on the region cell centers (two translations
    /// and one rotation for vector problems, constants for scalar).
    pub fn rigid_basis(&self) -> DMatrix<f64> {
        let nu = self.n_coarse();
        if self.ncomp == 1 {
            let mut r = DMatrix::zeros(nu, 1);
            for i in 0..self.cells.len() {
                r[(i, 0)] = 1.0;
            }
            return r;
        }
        let mut r = DMatrix::zeros(nu, 3);
        for (i, rc) in self.cells.iter().enumerate() {
            r[(2 * i, 0)] = 1.0;
            r[(2 * i + 1, 1)] = 1.0;
            r[(2 * i, 2)] = -(rc.center.y - self.position.y);
            r[(2 * i + 1, 2)] = rc.center.x - self.position.x;
        }
        r
    }

    /// Coarse directions orthogonal to the sampled rigid-body fields.
    pub fn rigid_complement(&self) -> DMatrix<f64> {
        orthogonal_complement(&self.rigid_basis(), self.n_coarse())
    }
}

fn rows_to_matrix(rows: Vec<DVector<f64>>, ncols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    out
}

use std::ops::{AddAssign, SubAssign};

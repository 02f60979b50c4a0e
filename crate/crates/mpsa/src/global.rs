//! Global assembly and solve: cell balance rows from the condensed stress
//! weights, right-hand sides from body force and boundary data, null-space
//! handling for pure-Neumann problems, and traction recovery.

use crate::fields::{CellField, FieldError, MaterialField, ProblemData};
use crate::geometry::{Mat2, Vec2};
use crate::linsolve::{bicgstab, conjugate_gradients, reverse_cuthill_mckee, BandedLu, Csr, SolveError};
use crate::local::{extract_region, solve_vertex, LocalError, VertexSolution};
use crate::mesh::{BoundaryTag, MeshTriplet, SubcellGeometry};
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::variants::VariantConfig;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlobalError {
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("missing stress weights for vertex {0}")]
    MissingWeights(usize),
}

/// Assembled cell-centered operator: M u = b where row K is the negated sum
/// of subface tractions (so that the balance sum T + int f = 0 holds).
pub struct GlobalSystem {
    pub ncomp: usize,
    pub n_cells: usize,
    pub matrix: Csr,
    pub rhs: DVector<f64>,
    pub pure_neumann: bool,
    /// Cell adjacency (vertex-sharing) used for ordering.
    pub adjacency: Vec<Vec<usize>>,
    /// Cell areas, kept for the rigid-motion projection.
    pub areas: Vec<f64>,
    pub centers: Vec<Vec2>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Auto,
    Direct,
    Cg,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: SolveMethod::Auto, tol: 1e-12, max_iter: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: CellField,
    pub iterations: usize,
    pub residual: f64,
    pub nullspace_projected: bool,
}

/// Run every local solve (in parallel when enabled), keyed by vertex.
pub fn solve_all_vertices(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    variant: &VariantConfig,
    data: Option<&ProblemData>,
) -> Result<Vec<VertexSolution>, LocalError> {
    let results = map_indexed(mesh.n_vertices(), |v| {
        extract_region(mesh, geo, mats, variant, v)
            .and_then(|r| solve_vertex(r, data, variant.method))
    });
    results.into_iter().collect()
}

/// Sequential twin of [`solve_all_vertices`] for benchmarking.
pub fn solve_all_vertices_seq(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    variant: &VariantConfig,
    data: Option<&ProblemData>,
) -> Result<Vec<VertexSolution>, LocalError> {
    let results = map_indexed_seq(mesh.n_vertices(), |v| {
        extract_region(mesh, geo, mats, variant, v)
            .and_then(|r| solve_vertex(r, data, variant.method))
    });
    results.into_iter().collect()
}

/// Assemble per the variant: the finite difference relative pairs the
/// projected fields symmetrically through its own bilinear form; every other
/// method uses the conservative cell-balance rows.
pub fn assemble_variant(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    variant: &VariantConfig,
    data: &ProblemData,
    solutions: &[VertexSolution],
) -> Result<GlobalSystem, GlobalError> {
    match variant.method {
        crate::variants::Method::FdSymmetric => assemble_galerkin(mesh, geo, mats, data, solutions),
        _ => assemble(mesh, geo, data, solutions),
    }
}

/// Symmetric pairing of the projected fields: consistent gradients in both
/// slots plus the jump stabilization. Exactly symmetric on any mesh; gives up
/// exact per-cell force balance.
fn assemble_galerkin(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    data: &ProblemData,
    solutions: &[VertexSolution],
) -> Result<GlobalSystem, GlobalError> {
    use crate::local::forms::{energy_rows, grad_dofs};
    let ncomp = solutions.first().map(|s| s.region.ncomp).unwrap_or(2);
    let ncells = mesh.n_cells();
    let n = ncomp * ncells;
    if solutions.len() != mesh.n_vertices() {
        return Err(GlobalError::MissingWeights(solutions.len()));
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = DVector::zeros(n);
    for c in 0..ncells {
        for k in 0..mesh.cells[c].len() {
            let w = geo.subcell_volume[c][k];
            let f = (data.body_force)(geo.subcell_centroid[c][k]);
            rhs[ncomp * c] += w * f.x;
            if ncomp == 2 {
                rhs[ncomp * c + 1] += w * f.y;
            }
        }
    }
    let dd = grad_dofs(ncomp);
    let method = if ncomp == 1 {
        crate::variants::Method::ScalarMpfa
    } else {
        crate::variants::Method::FdSymmetric
    };
    for sol in solutions {
        let region = &sol.region;
        let nl = region.n_coarse();
        // Stack the energy rows of every subcell over the local dofs, so the
        // pairing is (rows u)^T (rows v) plus the jump pairing.
        let mut blocks: Vec<DMatrix<f64>> = Vec::new();
        let mut dblocks: Vec<DVector<f64>> = Vec::new();
        for (i, rc) in region.cells.iter().enumerate() {
            let er = energy_rows(method, rc.mu, rc.lambda, rc.volume);
            blocks.push(&er * sol.grad_map.rows(dd * i, dd));
            dblocks.push(er * sol.grad_data.rows(dd * i, dd));
        }
        let mut bloc = sol.jump_op.transpose() * &sol.jump_op;
        let mut dloc = sol.jump_op.transpose() * &sol.jump_data;
        for (b, d) in blocks.iter().zip(&dblocks) {
            bloc += b.transpose() * b;
            dloc += b.transpose() * d;
        }
        // Neumann work term: subface data integral against the reconstruction
        // average of the test field.
        for (si, sf) in region.subfaces.iter().enumerate() {
            if sf.tag == Some(BoundaryTag::Neumann) {
                let side = &sf.sides[0];
                let mut gint = Vec2::zeros();
                for &(x, wq) in &sf.gauss {
                    gint += wq * (data.neumann)(x, side.normal);
                }
                let avg = region.subface_avg_map(&sol.grad_map, si);
                for comp in 0..ncomp {
                    let gval = if comp == 0 { gint.x } else { gint.y };
                    for a in 0..nl {
                        dloc[a] -= gval * avg[(comp, a)];
                    }
                }
            }
        }
        let gmap: Vec<usize> = region
            .cells
            .iter()
            .flat_map(|rc| (0..ncomp).map(move |c| ncomp * rc.cell + c))
            .collect();
        for a in 0..nl {
            for b in 0..nl {
                let v = bloc[(a, b)];
                if v != 0.0 {
                    triplets.push((gmap[a], gmap[b], v));
                }
            }
            rhs[gmap[a]] -= dloc[a];
        }
    }
    let _ = mats;

    let pure_neumann = mesh
        .boundary_tags
        .iter()
        .flatten()
        .all(|&t| t == BoundaryTag::Neumann);
    let mut adjacency = vec![Vec::new(); ncells];
    for v in 0..mesh.n_vertices() {
        let cells = &mesh.cells_of_vertex[v];
        for (i, &a) in cells.iter().enumerate() {
            for &b in &cells[i + 1..] {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    for l in &mut adjacency {
        l.sort_unstable();
        l.dedup();
    }
    Ok(GlobalSystem {
        ncomp,
        n_cells: ncells,
        matrix: Csr::from_triplets(n, triplets),
        rhs,
        pure_neumann,
        adjacency,
        areas: mesh.cell_areas.clone(),
        centers: mesh.cell_centers.clone(),
    })
}

/// Assemble the global system from per-vertex stress weights.
pub fn assemble(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    data: &ProblemData,
    solutions: &[VertexSolution],
) -> Result<GlobalSystem, GlobalError> {
    let ncomp = solutions
        .first()
        .map(|s| s.region.ncomp)
        .unwrap_or(2);
    let ncells = mesh.n_cells();
    let n = ncomp * ncells;
    if solutions.len() != mesh.n_vertices() {
        return Err(GlobalError::MissingWeights(solutions.len()));
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = DVector::zeros(n);

    // Body force by the subcell midpoint rule.
    for c in 0..ncells {
        for k in 0..mesh.cells[c].len() {
            let w = geo.subcell_volume[c][k];
            let f = (data.body_force)(geo.subcell_centroid[c][k]);
            rhs[ncomp * c] += w * f.x;
            if ncomp == 2 {
                rhs[ncomp * c + 1] += w * f.y;
            }
        }
    }

    for sol in solutions {
        let region = &sol.region;
        for (si, sf) in region.subfaces.iter().enumerate() {
            for (side_idx, side) in sf.sides.iter().enumerate() {
                let row_cell = region.cells[side.local_cell].cell;
                let (map, dat) = &sol.tractions[si][side_idx];
                for comp_r in 0..ncomp {
                    let row = ncomp * row_cell + comp_r;
                    // M = -sum of traction weights.
                    for (j, rc) in region.cells.iter().enumerate() {
                        for comp_c in 0..ncomp {
                            let v = map[(comp_r, ncomp * j + comp_c)];
                            if v != 0.0 {
                                triplets.push((row, ncomp * rc.cell + comp_c, -v));
                            }
                        }
                    }
                    rhs[row] += dat[comp_r];
                }
            }
        }
    }

    let pure_neumann = mesh
        .boundary_tags
        .iter()
        .flatten()
        .all(|&t| t == BoundaryTag::Neumann);

    let mut adjacency = vec![Vec::new(); ncells];
    for v in 0..mesh.n_vertices() {
        let cells = &mesh.cells_of_vertex[v];
        for (i, &a) in cells.iter().enumerate() {
            for &b in &cells[i + 1..] {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    for l in &mut adjacency {
        l.sort_unstable();
        l.dedup();
    }

    Ok(GlobalSystem {
        ncomp,
        n_cells: ncells,
        matrix: Csr::from_triplets(n, triplets),
        rhs,
        pure_neumann,
        adjacency,
        areas: mesh.cell_areas.clone(),
        centers: mesh.cell_centers.clone(),
    })
}

impl GlobalSystem {
    /// Volume-weighted rigid-motion basis sampled at cell centers (about the
    /// area centroid): translations plus one rotation, or constants for the
    /// scalar case.
    pub fn rigid_basis(&self) -> DMatrix<f64> {
        let n = self.ncomp * self.n_cells;
        if self.ncomp == 1 {
            return DMatrix::from_element(n, 1, 1.0);
        }
        let total: f64 = self.areas.iter().sum();
        let cx: Vec2 = self
            .areas
            .iter()
            .zip(&self.centers)
            .map(|(&a, &x)| a * x)
            .sum::<Vec2>()
            / total;
        let mut r = DMatrix::zeros(n, 3);
        for c in 0..self.n_cells {
            r[(2 * c, 0)] = 1.0;
            r[(2 * c + 1, 1)] = 1.0;
            r[(2 * c, 2)] = -(self.centers[c].y - cx.y);
            r[(2 * c + 1, 2)] = self.centers[c].x - cx.x;
        }
        r
    }

    fn project_out_rigid(&self, u: &mut DVector<f64>) {
        let r = self.rigid_basis();
        let k = r.ncols();
        // Volume-weighted least squares onto the rigid space.
        let mut w = DVector::zeros(u.len());
        for c in 0..self.n_cells {
            for comp in 0..self.ncomp {
                w[self.ncomp * c + comp] = self.areas[c];
            }
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = (0..u.len()).map(|t| w[t] * r[(t, i)] * r[(t, j)]).sum::<f64>();
            }
            rhs[i] = (0..u.len()).map(|t| w[t] * r[(t, i)] * u[t]).sum::<f64>();
        }
        let coef = gram.lu().solve(&rhs).expect("rigid Gram is positive definite");
        for t in 0..u.len() {
            for i in 0..k {
                u[t] -= coef[i] * r[(t, i)];
            }
        }
    }

    /// Solve M u = b per the requested method.
    pub fn solve(&self, opts: SolverOptions) -> Result<SolveResult, GlobalError> {
        let n = self.matrix.n;
        let max_iter = if opts.max_iter == 0 { 40 * n } else { opts.max_iter };
        let mut projected = false;

        let (mut u, iterations) = if self.pure_neumann {
            match opts.method {
                SolveMethod::Auto if n > 40_000 => {
                    let r = self.rigid_basis();
                    let sys = self;
                    let project = move |v: &mut DVector<f64>| {
                        let _ = &r;
                        sys_project(sys, v);
                    };
                    let (u, it, _) =
                        bicgstab(&self.matrix, &self.rhs, opts.tol, max_iter, Some(&project))?;
                    (u, it)
                }
                _ => (self.solve_bordered()?, 1),
            }
        } else {
            match opts.method {
                SolveMethod::Cg => {
                    let (u, it, _) = conjugate_gradients(&self.matrix, &self.rhs, opts.tol, max_iter)?;
                    (u, it)
                }
                SolveMethod::Direct => (self.solve_banded()?, 1),
                SolveMethod::Auto => {
                    if n <= 40_000 {
                        (self.solve_banded()?, 1)
                    } else {
                        let (u, it, _) = bicgstab(&self.matrix, &self.rhs, opts.tol, max_iter, None)?;
                        (u, it)
                    }
                }
            }
        };

        if self.pure_neumann {
            self.project_out_rigid(&mut u);
            projected = true;
        }

        let residual = (self.matrix.matvec(&u) - &self.rhs).norm() / self.rhs.norm().max(1e-300);
        Ok(SolveResult {
            u: CellField { ncomp: self.ncomp, data: u.as_slice().to_vec() },
            iterations,
            residual,
            nullspace_projected: projected,
        })
    }

    /// Banded LU under reverse Cuthill-McKee ordering of the cells.
    fn solve_banded(&self) -> Result<DVector<f64>, GlobalError> {
        let perm_cells = reverse_cuthill_mckee(self.n_cells, &self.adjacency);
        let ncomp = self.ncomp;
        let n = self.matrix.n;
        let mut inv = vec![0usize; self.n_cells];
        for (new, &old) in perm_cells.iter().enumerate() {
            inv[old] = new;
        }
        let dof = |old: usize| -> usize {
            let cell = old / ncomp;
            let comp = old % ncomp;
            ncomp * inv[cell] + comp
        };
        let mut trip = Vec::with_capacity(self.matrix.values.len());
        let mut band = 0usize;
        for r in 0..n {
            for k in self.matrix.row_ptr[r]..self.matrix.row_ptr[r + 1] {
                let (pr, pc) = (dof(r), dof(self.matrix.col_idx[k]));
                band = band.max(pr.abs_diff(pc));
                trip.push((pr, pc, self.matrix.values[k]));
            }
        }
        let a = Csr::from_triplets(n, trip);
        let lu = BandedLu::factor(&a, band, band)?;
        let mut pb = DVector::zeros(n);
        for r in 0..n {
            pb[dof(r)] = self.rhs[r];
        }
        let px = lu.solve(&pb);
        let mut x = DVector::zeros(n);
        for r in 0..n {
            x[r] = px[dof(r)];
        }
        Ok(x)
    }

    /// Dense bordered solve [M R^T; R 0] pinning mean displacement and mean
    /// rotation for pure-Neumann systems.
    fn solve_bordered(&self) -> Result<DVector<f64>, GlobalError> {
        let n = self.matrix.n;
        let r = self.rigid_basis();
        let k = r.ncols();
        let mut aug = DMatrix::zeros(n + k, n + k);
        aug.view_mut((0, 0), (n, n)).copy_from(&self.matrix.to_dense());
        aug.view_mut((0, n), (n, k)).copy_from(&r);
        aug.view_mut((n, 0), (k, n)).copy_from(&r.transpose());
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&self.rhs);
        let sol = aug
            .lu()
            .solve(&rhs)
            .ok_or(SolveError::Singular { row: 0 })?;
        Ok(sol.rows(0, n).into_owned())
    }
}

fn sys_project(sys: &GlobalSystem, v: &mut DVector<f64>) {
    // Unweighted residual projection against the rigid basis.
    let r = sys.rigid_basis();
    for j in 0..r.ncols() {
        let col = r.column(j);
        let c = col.dot(v) / col.dot(&col);
        *v -= c * col;
    }
}

/// Per-face tractions of one side: `tractions[face]` holds (cell, T) per
/// adjacent cell, T summed over the face's two subfaces.
pub fn recover_tractions(
    mesh: &MeshTriplet,
    solutions: &[VertexSolution],
    u: &CellField,
) -> Vec<Vec<(usize, Vec2)>> {
    let ncomp = u.ncomp;
    let mut out: Vec<Vec<(usize, Vec2)>> = mesh
        .faces
        .iter()
        .map(|f| f.cells().map(|c| (c, Vec2::zeros())).collect())
        .collect();
    for sol in solutions {
        let region = &sol.region;
        let mut uloc = DVector::zeros(region.n_coarse());
        for (i, rc) in region.cells.iter().enumerate() {
            for comp in 0..ncomp {
                uloc[ncomp * i + comp] = u.get(rc.cell)[comp];
            }
        }
        for (si, sf) in region.subfaces.iter().enumerate() {
            for (side_idx, side) in sf.sides.iter().enumerate() {
                let cell = region.cells[side.local_cell].cell;
                let (map, dat) = &sol.tractions[si][side_idx];
                let t = map * &uloc + dat;
                let slot = out[sf.face]
                    .iter_mut()
                    .find(|(c, _)| *c == cell)
                    .expect("face side present");
                slot.1.x += t[0];
                if ncomp == 2 {
                    slot.1.y += t[1];
                }
            }
        }
    }
    out
}

/// Physical per-face tractions m sigma(G) n computed from the subcell
/// gradients (identical to [`recover_tractions`] for the stress-continuity
/// variants; for the finite difference relative this is what the force
/// balance diagnostic measures and intentionally fails).
pub fn physical_tractions(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    mats: &MaterialField,
    solutions: &[VertexSolution],
    u: &CellField,
) -> Vec<Vec<(usize, Vec2)>> {
    let ncomp = u.ncomp;
    let grads = gradient_table(mesh, solutions, u);
    mesh.faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            f.cells()
                .map(|c| {
                    let mut total = Vec2::zeros();
                    let n = mesh.outward_normal(fi, c);
                    for e in 0..2 {
                        let v = mesh.faces[fi].verts[e];
                        let k = mesh.cells[c].iter().position(|&x| x == v).expect("face vertex");
                        let g = grads[c][k];
                        let area = geo.subface[fi][e].area;
                        if ncomp == 1 {
                            let flux = area * mats.mu[c] * (g.m11 * n.x + g.m12 * n.y);
                            total.x += flux;
                        } else {
                            total += crate::local::forms::subface_traction(
                                mats.mu[c],
                                mats.lambda[c],
                                g,
                                area,
                                n,
                            );
                        }
                    }
                    (c, total)
                })
                .collect()
        })
        .collect()
}

/// Subcell gradient table of the solved state: `grads[cell][k]` for the k-th
/// vertex of the cell.
pub fn gradient_table(
    mesh: &MeshTriplet,
    solutions: &[VertexSolution],
    u: &CellField,
) -> Vec<Vec<Mat2>> {
    let ncomp = u.ncomp;
    let mut out: Vec<Vec<Mat2>> = mesh
        .cells
        .iter()
        .map(|poly| vec![Mat2::zeros(); poly.len()])
        .collect();
    for sol in solutions {
        let region = &sol.region;
        let mut uloc = DVector::zeros(region.n_coarse());
        for (i, rc) in region.cells.iter().enumerate() {
            for comp in 0..ncomp {
                uloc[ncomp * i + comp] = u.get(rc.cell)[comp];
            }
        }
        for (i, rc) in region.cells.iter().enumerate() {
            let g = sol.gradient(i, &uloc);
            let k = mesh.cells[rc.cell]
                .iter()
                .position(|&v| v == region.vertex)
                .expect("vertex of cell");
            out[rc.cell][k] = g;
        }
    }
    out
}

/// Per-cell force balance residuals |sum_sigma T_K^sigma + int_K f| together
/// with the scale sum |T| + |int f|.
pub fn conservation_residuals(
    mesh: &MeshTriplet,
    geo: &SubcellGeometry,
    data: &ProblemData,
    tractions: &[Vec<(usize, Vec2)>],
    ncomp: usize,
) -> Vec<(f64, f64)> {
    let mut sums = vec![(Vec2::zeros(), 0.0f64); mesh.n_cells()];
    for (fi, sides) in tractions.iter().enumerate() {
        let _ = fi;
        for &(cell, t) in sides {
            sums[cell].0 += t;
            sums[cell].1 += t.norm();
        }
    }
    let mut out = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let mut fint = Vec2::zeros();
        for k in 0..mesh.cells[c].len() {
            let w = geo.subcell_volume[c][k];
            let f = (data.body_force)(geo.subcell_centroid[c][k]);
            fint += w * f;
        }
        if ncomp == 1 {
            fint.y = 0.0;
            sums[c].0.y = 0.0;
        }
        out.push(((sums[c].0 + fint).norm(), sums[c].1 + fint.norm()));
    }
    out
}

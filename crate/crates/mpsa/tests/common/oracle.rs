//! Brute-force reference for the local solves: the saddle (KKT) system of
//! the raw constrained minimization on one interior interaction region. All
//! subface quadrature values stay as unknowns and both multiplier blocks are
//! explicit: one per hybrid-space traction test (y_C) and one per
//! discontinuous-space test of the piecewise-linear constraint (y_D), which
//! enters only weakly. No analytic elimination is shared with the production
//! solver.

use mpsa::local::forms::traction_rows;
use mpsa::local::Region;
use mpsa::variants::Method;
use nalgebra::{DMatrix, DVector};

/// Dense index bookkeeping for the raw fine unknowns: one scalar per
/// (subface, side, gauss point, component).
struct FineIndex {
    offsets: Vec<Vec<usize>>,
    total: usize,
    ncomp: usize,
}

impl FineIndex {
    fn new(region: &Region) -> Self {
        let ncomp = region.ncomp;
        let mut offsets = Vec::with_capacity(region.subfaces.len());
        let mut at = 0;
        for sf in &region.subfaces {
            let mut per_side = Vec::new();
            for _ in &sf.sides {
                per_side.push(at);
                at += ncomp * sf.gauss.len();
            }
            offsets.push(per_side);
        }
        Self { offsets, total: at, ncomp }
    }

    fn dof(&self, si: usize, side: usize, q: usize, comp: usize) -> usize {
        self.offsets[si][side] + self.ncomp * q + comp
    }
}

/// Consistent gradients of each subcell as linear maps over (fine dofs,
/// coarse dofs), rows stacked [G_11, G_12, G_21, G_22].
struct GradientMap {
    fine: Vec<DMatrix<f64>>,
    coarse: Vec<DMatrix<f64>>,
}

fn gradient_maps(region: &Region, idx: &FineIndex) -> GradientMap {
    let ncomp = region.ncomp;
    let dd = 2 * ncomp;
    let nu = region.n_coarse();
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    for (i, rc) in region.cells.iter().enumerate() {
        let mut mf = DMatrix::zeros(dd, idx.total);
        let mut mc = DMatrix::zeros(dd, nu);
        for (slot, &si) in rc.subfaces.iter().enumerate() {
            let sf = &region.subfaces[si];
            let side = sf.sides.iter().position(|s| s.local_cell == i).expect("cell on its face");
            let g = rc.g[slot];
            let wsum: f64 = sf.gauss.iter().map(|g| g.1).sum();
            for comp in 0..ncomp {
                for xy in 0..2 {
                    let row = 2 * comp + xy;
                    let gx = if xy == 0 { g.x } else { g.y };
                    for (q, &(_, w)) in sf.gauss.iter().enumerate() {
                        mf[(row, idx.dof(si, side, q, comp))] += w / wsum * gx;
                    }
                    mc[(row, ncomp * i + comp)] -= gx;
                }
            }
        }
        fine.push(mf);
        coarse.push(mc);
    }
    GradientMap { fine, coarse }
}

/// Residual rows of the piecewise-linear constraint, one per (cell, corner
/// subface, gauss point, component), over (fine dofs, coarse dofs).
fn residual_maps(
    region: &Region,
    idx: &FineIndex,
    grads: &GradientMap,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let ncomp = region.ncomp;
    let nu = region.n_coarse();
    let mut rows_f: Vec<DVector<f64>> = Vec::new();
    let mut rows_c: Vec<DVector<f64>> = Vec::new();
    for (i, rc) in region.cells.iter().enumerate() {
        for &si in &rc.subfaces {
            let sf = &region.subfaces[si];
            let side = sf.sides.iter().position(|s| s.local_cell == i).unwrap();
            for (q, &(x, _)) in sf.gauss.iter().enumerate() {
                let r = x - rc.center;
                for comp in 0..ncomp {
                    let mut rf = DVector::zeros(idx.total);
                    let mut rcv = DVector::zeros(nu);
                    rf[idx.dof(si, side, q, comp)] += 1.0;
                    rcv[ncomp * i + comp] -= 1.0;
                    for xy in 0..2 {
                        let grow = 2 * comp + xy;
                        let rval = if xy == 0 { r.x } else { r.y };
                        rf -= rval * grads.fine[i].row(grow).transpose();
                        rcv -= rval * grads.coarse[i].row(grow).transpose();
                    }
                    rows_f.push(rf);
                    rows_c.push(rcv);
                }
            }
        }
    }
    (stack(rows_f), stack(rows_c))
}

fn stack(rows: Vec<DVector<f64>>) -> DMatrix<f64> {
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&r.transpose());
    }
    m
}

/// Solve the raw saddle system at an interior vertex for every coarse basis
/// vector; returns per (subface, side) the traction map over coarse values.
pub fn brute_force_traction_maps(region: &Region, method: Method) -> Vec<Vec<DMatrix<f64>>> {
    assert!(
        region.subfaces.iter().all(|sf| sf.tag.is_none()),
        "oracle covers interior regions"
    );
    let ncomp = region.ncomp;
    let nu = region.n_coarse();
    let idx = FineIndex::new(region);
    let grads = gradient_maps(region, &idx);
    let (res_f, res_c) = residual_maps(region, &idx, &grads);
    let m = region.n_cells();
    let n_w = ncomp * m + idx.total;

    // Traction rows per (subface, side) over (fine, coarse) dofs.
    let trac = |si: usize, side: usize| -> (DMatrix<f64>, DMatrix<f64>) {
        let sf = &region.subfaces[si];
        let i = sf.sides[side].local_cell;
        let rc = &region.cells[i];
        let slot = if rc.subfaces[0] == si { 0 } else { 1 };
        let (factor, dir) = match method {
            Method::FdSymmetric => (rc.volume, rc.g[slot]),
            _ => (sf.area, sf.sides[side].normal),
        };
        let tr = traction_rows(method, rc.mu, rc.lambda, factor, dir);
        (tr.clone() * &grads.fine[i], tr * &grads.coarse[i])
    };

    // Jump energy Hessian on the raw fine unknowns.
    let mut q_hess = DMatrix::zeros(idx.total, idx.total);
    for (si, sf) in region.subfaces.iter().enumerate() {
        for (q, &(_, w)) in sf.gauss.iter().enumerate() {
            for comp in 0..ncomp {
                let mut row = DVector::zeros(idx.total);
                row[idx.dof(si, 0, q, comp)] += 1.0;
                row[idx.dof(si, 1, q, comp)] -= 1.0;
                let wq = sf.alpha * w / sf.area;
                q_hess += 2.0 * wq * &row * row.transpose();
            }
        }
    }

    // Constraint block A: traction continuity per hybrid face test.
    let n_a = ncomp * region.subfaces.len();
    let mut ga = DMatrix::zeros(n_a, idx.total);
    let mut ra = DMatrix::zeros(n_a, nu);
    for (si, sf) in region.subfaces.iter().enumerate() {
        let mut tf = DMatrix::zeros(ncomp, idx.total);
        let mut tc = DMatrix::zeros(ncomp, nu);
        for side in 0..sf.sides.len() {
            let (f, c) = trac(si, side);
            tf += f;
            tc += c;
        }
        ga.rows_mut(ncomp * si, ncomp).copy_from(&tf);
        ra.rows_mut(ncomp * si, ncomp).copy_from(&(-tc));
    }

    // Constraint block B: the piecewise-linear constraint tested against the
    // whole discontinuous space (cells then fine values).
    let mut res_full = DMatrix::zeros(res_f.nrows(), n_w);
    res_full.view_mut((0, 0), (res_f.nrows(), ncomp * m)).copy_from(&res_c);
    res_full
        .view_mut((0, ncomp * m), (res_f.nrows(), idx.total))
        .copy_from(&res_f);
    let gb = res_full.transpose() * &res_f;
    let rb = -(res_full.transpose() * &res_c);

    // KKT system [Q GA^T GB^T; GA 0 0; GB 0 0].
    let n = idx.total + n_a + n_w;
    let mut sys = DMatrix::zeros(n, n);
    let mut rhs = DMatrix::zeros(n, nu);
    sys.view_mut((0, 0), (idx.total, idx.total)).copy_from(&q_hess);
    sys.view_mut((0, idx.total), (idx.total, n_a)).copy_from(&ga.transpose());
    sys.view_mut((0, idx.total + n_a), (idx.total, n_w)).copy_from(&gb.transpose());
    sys.view_mut((idx.total, 0), (n_a, idx.total)).copy_from(&ga);
    sys.view_mut((idx.total + n_a, 0), (n_w, idx.total)).copy_from(&gb);
    rhs.view_mut((idx.total, 0), (n_a, nu)).copy_from(&ra);
    rhs.view_mut((idx.total + n_a, 0), (n_w, nu)).copy_from(&rb);

    // Minimum-norm least squares: multipliers are non-unique, the primal
    // minimizer is unique. A loud check guards against inconsistency.
    let svd = nalgebra::SVD::new(sys.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let sol = svd.solve(&rhs, 1e-12 * smax).expect("oracle saddle solve");
    let resid = (&sys * &sol - &rhs).amax();
    let scale = sys.amax().max(rhs.amax());
    assert!(
        resid <= 1e-9 * scale,
        "oracle saddle system inconsistent: residual {resid:.3e} vs scale {scale:.3e}"
    );

    let u_f = sol.rows(0, idx.total).into_owned();
    let mut out = Vec::new();
    for (si, sf) in region.subfaces.iter().enumerate() {
        let mut per_side = Vec::new();
        for side in 0..sf.sides.len() {
            let (tf, tc) = trac(si, side);
            per_side.push(&tf * &u_f + tc);
        }
        out.push(per_side);
    }
    out
}

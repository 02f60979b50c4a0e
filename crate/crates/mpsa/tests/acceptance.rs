//! Acceptance suite: every stability and accuracy claim the artifact ships
//! with, one test per criterion, each printing a pass/fail line.

mod common;

use common::interior_vertices;
use common::oracle::brute_force_traction_maps;
use mpsa::coercivity::{audit, estimate_global_coercivity, THETA2_TOL};
use mpsa::fields::{MaterialField, ProblemData};
use mpsa::geometry::{Mat2, Vec2};
use mpsa::global::{
    assemble, assemble_variant, conservation_residuals, physical_tractions, recover_tractions,
    solve_all_vertices, SolverOptions,
};
use mpsa::local::{extract_region, solve_vertex};
use mpsa::mesh::generate::{generate_mesh, MeshKind};
use mpsa::mesh::{compute_geometry, compute_geometry_with, BoundaryTag, MeshTriplet};
use mpsa::norms::{c_norm, d_norm, project_c, project_t_cells, t_norm, CField, DField};
use mpsa::variants::{Method, VariantConfig};
use mpsa::verification::{
    case_linear, case_scalar_linear, case_scalar_trig, case_trig, compute_errors,
    convergence_study, locking_study, solve_case,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::time::Instant;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("acceptance [{}]: {} ({})", criterion, if pass { "PASS" } else { "FAIL" }, detail);
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn shipped_meshes() -> Vec<(String, MeshTriplet)> {
    vec![
        ("cartesian".into(), generate_mesh(MeshKind::Cartesian, 4, 4, 0.0, 0).unwrap()),
        ("perturbed".into(), generate_mesh(MeshKind::PerturbedQuad, 4, 4, 0.2, 11).unwrap()),
        ("triangulated".into(), generate_mesh(MeshKind::Triangulated, 4, 4, 0.0, 0).unwrap()),
        ("equilateral".into(), generate_mesh(MeshKind::EquilateralTri, 4, 4, 0.0, 0).unwrap()),
        ("hexagonal".into(), generate_mesh(MeshKind::HexagonalDual, 3, 3, 0.0, 0).unwrap()),
    ]
}

/// Sheared grid of congruent rhombi (equilateral parallelograms).
fn parallelogram_mesh(n: usize) -> MeshTriplet {
    let h = 1.0 / n as f64;
    let s3 = 3.0f64.sqrt() / 2.0;
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut verts = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            verts.push(Vec2::new(h * (i as f64 + 0.5 * j as f64), h * s3 * j as f64));
        }
    }
    let mut cells = Vec::new();
    let mut tags = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    for poly in &cells {
        for k in 0..poly.len() {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            tags.insert((a.min(b), a.max(b)), BoundaryTag::Dirichlet);
        }
    }
    MeshTriplet::from_cells(verts, cells, &tags).unwrap()
}

#[test]
fn criterion_1_patch_test() {
    let start = Instant::now();
    let a = Mat2::new(1.3, -0.7, 0.4, 2.2);
    let case = case_linear(a, 1.7, 0.9);
    let stress = {
        let sym = 0.5 * (a + a.transpose());
        2.0 * 1.7 * sym + 0.9 * a.trace() * Mat2::identity()
    };
    let mut worst_u = 0.0f64;
    let mut worst_t = 0.0f64;
    for (kind, pert) in [
        (MeshKind::Cartesian, 0.0),
        (MeshKind::PerturbedQuad, 0.2),
        (MeshKind::Triangulated, 0.0),
    ] {
        let mesh = generate_mesh(kind, 8, 8, pert, 23).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        let variant = VariantConfig::default();
        let (sols, res) = solve_case(&mesh, &geo, &case, &variant, SolverOptions::default()).unwrap();
        for c in 0..mesh.n_cells() {
            let want = a * mesh.cell_centers[c];
            let got = res.u.get(c);
            worst_u = worst_u.max((got[0] - want.x).abs().max((got[1] - want.y).abs()));
        }
        for (fi, sides) in recover_tractions(&mesh, &sols, &res.u).iter().enumerate() {
            let m = mesh.face_measure(fi);
            for &(cell, t) in sides {
                let n = mesh.outward_normal(fi, cell);
                worst_t = worst_t.max((t - m * (stress * n)).norm());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let tol = 1e-10 * a.norm();
    report(
        "1 patch test",
        worst_u <= tol && worst_t <= tol && elapsed < 5.0,
        &format!("max cell err {worst_u:.2e}, max traction err {worst_t:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_2_local_solver_oracle() {
    let mut count = 0;
    let mut worst = 0.0f64;
    for (kind, n, pert, seed) in [
        (MeshKind::PerturbedQuad, 4usize, 0.25, 31u64),
        (MeshKind::Triangulated, 3, 0.15, 77),
    ] {
        let mesh = generate_mesh(kind, n, n, pert, seed).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        let variant = VariantConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mats = MaterialField {
            mu: (0..mesh.n_cells()).map(|_| rng.gen_range(0.5..3.0)).collect(),
            lambda: (0..mesh.n_cells()).map(|_| rng.gen_range(0.0..2.0)).collect(),
        };
        for v in interior_vertices(&mesh) {
            let region = extract_region(&mesh, &geo, &mats, &variant, v).unwrap();
            let reference = brute_force_traction_maps(&region, Method::MpsaFull);
            let sol = solve_vertex(region, None, Method::MpsaFull).unwrap();
            let scale = reference
                .iter()
                .flatten()
                .map(|t| t.amax())
                .fold(0.0f64, f64::max);
            for (si, per_side) in reference.iter().enumerate() {
                for (side, t_ref) in per_side.iter().enumerate() {
                    worst = worst.max((&sol.tractions[si][side].0 - t_ref).amax() / scale);
                }
            }
            count += 1;
        }
    }
    report(
        "2 local solver oracle",
        count >= 10 && worst <= 1e-10,
        &format!("{count} interior regions, worst relative deviation {worst:.2e}"),
    );
}

#[test]
fn criterion_3_antisymmetry_and_conservation() {
    // Stress weight antisymmetry on every interior subface of every shipped
    // mesh (exact, by construction after the solve enforces it).
    let mut worst_anti = 0.0f64;
    for (_, mesh) in shipped_meshes() {
        let geo = compute_geometry(&mesh).unwrap();
        let mats = MaterialField::constant(mesh.n_cells(), 1.0, 1.0);
        let variant = VariantConfig::default();
        let sols = solve_all_vertices(&mesh, &geo, &mats, &variant, None).unwrap();
        for sol in &sols {
            for (si, sf) in sol.region.subfaces.iter().enumerate() {
                if sf.tag.is_none() {
                    let d = (&sol.tractions[si][0].0 + &sol.tractions[si][1].0).amax();
                    worst_anti = worst_anti.max(d);
                }
            }
        }
    }

    // Per-cell force balance of the solved state.
    let case = case_trig(1.0, 1.0);
    let mut worst_balance = 0.0f64;
    for kind in [MeshKind::Cartesian, MeshKind::Triangulated] {
        let mesh = generate_mesh(kind, 8, 8, 0.0, 0).unwrap();
        let geo = compute_geometry(&mesh).unwrap();
        let variant = VariantConfig::default();
        let (sols, res) = solve_case(&mesh, &geo, &case, &variant, SolverOptions::default()).unwrap();
        let tr = recover_tractions(&mesh, &sols, &res.u);
        let data = case.problem_data();
        for (r, s) in conservation_residuals(&mesh, &geo, &data, &tr, 2) {
            worst_balance = worst_balance.max(r / s.max(1e-300));
        }
    }

    // Finite difference relative: symmetric operator, lost physical balance.
    let mesh = generate_mesh(MeshKind::PerturbedQuad, 6, 6, 0.2, 3).unwrap();
    let geo = compute_geometry(&mesh).unwrap();
    let variant = VariantConfig::method_only(Method::FdSymmetric);
    let mats = case.materials(mesh.n_cells());
    let data = case.problem_data();
    let sols = solve_all_vertices(&mesh, &geo, &mats, &variant, Some(&data)).unwrap();
    let sys = assemble_variant(&mesh, &geo, &mats, &variant, &data, &sols).unwrap();
    let fd_asym = sys.matrix.asymmetry() / sys.matrix.max_abs();
    let res = sys
        .solve(SolverOptions { method: mpsa::global::SolveMethod::Cg, ..Default::default() })
        .unwrap();
    let ptr = physical_tractions(&mesh, &geo, &mats, &sols, &res.u);
    let fd_imbalance = conservation_residuals(&mesh, &geo, &data, &ptr, 2)
        .iter()
        .map(|&(r, s)| r / s.max(1e-300))
        .fold(0.0f64, f64::max);

    report(
        "3 antisymmetry and conservation",
        worst_anti == 0.0 && worst_balance <= 1e-10 && fd_asym <= 1e-12 && fd_imbalance > 1e-6,
        &format!(
            "antisymmetry {worst_anti:.1e}, balance {worst_balance:.2e}, fd asymmetry {fd_asym:.2e}, fd imbalance {fd_imbalance:.2e}"
        ),
    );
}

#[test]
fn criterion_4_coercivity_audit_verdicts() {
    let run_audit = |mesh: &MeshTriplet, method: Method| {
        let variant = VariantConfig { method, ..VariantConfig::default() };
        let geo = compute_geometry_with(mesh, variant.quadrature()).unwrap();
        let mats = MaterialField::constant(mesh.n_cells(), 1.0, 1.0);
        let sols = solve_all_vertices(mesh, &geo, &mats, &variant, None).unwrap();
        (audit(mesh, &geo, &mats, &sols, None), sols, geo)
    };

    let cart = generate_mesh(MeshKind::Cartesian, 4, 4, 0.0, 0).unwrap();
    let (rep_c, _, _) = run_audit(&cart, Method::MpsaFull);
    let para = parallelogram_mesh(4);
    let (rep_p, _, _) = run_audit(&para, Method::MpsaFull);
    let eq = generate_mesh(MeshKind::EquilateralTri, 4, 4, 0.0, 0).unwrap();
    let (rep_e, _, _) = run_audit(&eq, Method::MpsaFull);
    let (rep_r, sols_r, _geo_r) = run_audit(&eq, Method::MpsaReduced);

    // Reduced integration: jump energy of the solved projections vanishes and
    // the two gradient constructions coincide (dual vectors are scaled
    // normals).
    let mut worst_jump = 0.0f64;
    let mut worst_dual = 0.0f64;
    for sol in &sols_r {
        let mut rng = ChaCha8Rng::seed_from_u64(sol.region.vertex as u64);
        use rand::Rng;
        let mut u = nalgebra::DVector::<f64>::zeros(sol.region.n_coarse());
        for x in u.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let scale: f64 = u.norm_squared().max(1e-30);
        worst_jump = worst_jump.max(sol.jump_energy(&u) / scale);
        for rc in &sol.region.cells {
            for (slot, &sfi) in rc.subfaces.iter().enumerate() {
                let sf = &sol.region.subfaces[sfi];
                let side = sf.sides.iter().find(|s| {
                    sol.region.cells[s.local_cell].cell == rc.cell
                }).unwrap();
                let expect = (sf.area / rc.volume) * side.normal;
                worst_dual = worst_dual.max((rc.g[slot] - expect).norm() / expect.norm());
            }
        }
    }

    let pass = rep_c.global.audit_pass
        && rep_c.global.theta2_min.unwrap() > THETA2_TOL
        && rep_p.global.audit_pass
        && rep_p.global.theta2_min.unwrap() > THETA2_TOL
        && !rep_e.global.audit_pass
        && rep_r.global.audit_pass
        && rep_r.global.theta2_min.unwrap() > THETA2_TOL
        && worst_jump <= 1e-12
        && worst_dual <= 1e-12;
    report(
        "4 coercivity audit verdicts",
        pass,
        &format!(
            "cartesian theta2 {:.3}, parallelogram theta2 {:.3}, equilateral pass={}, reduced theta2 {:.3}, jump {worst_jump:.1e}, dual id {worst_dual:.1e}",
            rep_c.global.theta2_min.unwrap(),
            rep_p.global.theta2_min.unwrap(),
            rep_e.global.audit_pass,
            rep_r.global.theta2_min.unwrap(),
        ),
    );
}

#[test]
fn criterion_5_convergence_rates() {
    let start = Instant::now();
    let case = case_trig(1.0, 1.0);
    let levels = [4usize, 8, 16, 32, 64];
    let cart = convergence_study(
        &case,
        MeshKind::Cartesian,
        &levels,
        0.0,
        0,
        &VariantConfig::default(),
        SolverOptions::default(),
        false,
    )
    .unwrap();
    let pert = convergence_study(
        &case,
        MeshKind::PerturbedQuad,
        &levels,
        0.2,
        1000,
        &VariantConfig::default(),
        SolverOptions::default(),
        false,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let cart_l2 = cart.rows.last().unwrap().rate_l2.unwrap();
    let cart_stress = cart.rows.last().unwrap().rate_stress.unwrap();
    let pert_l2 = pert.rows.last().unwrap().rate_l2.unwrap();
    let pert_stress = pert.rows.last().unwrap().rate_stress.unwrap();
    report(
        "5 convergence rates",
        cart_l2 >= 1.9 && cart_stress >= 0.9 && pert_l2 >= 1.7 && pert_stress >= 0.9 && elapsed < 120.0,
        &format!(
            "cartesian l2 {cart_l2:.2} stress {cart_stress:.2}; perturbed l2 {pert_l2:.2} stress {pert_stress:.2}; {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_6_scalar_specialization() {
    let variant = VariantConfig::method_only(Method::ScalarMpfa);
    // Linear pressure exactness.
    let lin = case_scalar_linear(Vec2::new(0.8, -1.4), 1.6);
    let mesh = generate_mesh(MeshKind::Triangulated, 6, 6, 0.0, 0).unwrap();
    let geo = compute_geometry(&mesh).unwrap();
    let (sols, res) = solve_case(&mesh, &geo, &lin, &variant, SolverOptions::default()).unwrap();
    let lin_errs = compute_errors(&mesh, &geo, &lin, &sols, &res);

    let trig = case_scalar_trig(1.0);
    let table = convergence_study(
        &trig,
        MeshKind::Cartesian,
        &[4, 8, 16, 32],
        0.0,
        0,
        &variant,
        SolverOptions::default(),
        false,
    )
    .unwrap();
    let rate = table.rows.last().unwrap().rate_l2.unwrap();
    report(
        "6 scalar specialization",
        lin_errs.l2_u <= 1e-10 && lin_errs.stress <= 1e-10 && rate >= 1.9,
        &format!("linear l2 {:.2e}, flux {:.2e}, L2 rate {rate:.2}", lin_errs.l2_u, lin_errs.stress),
    );
}

#[test]
fn criterion_7_locking() {
    let mesh = generate_mesh(MeshKind::Triangulated, 32, 32, 0.0, 0).unwrap();
    let nus = [0.3, 0.4, 0.49, 0.499, 0.4999];
    let study = locking_study(&mesh, &nus, 1.0, &VariantConfig::default(), SolverOptions::default())
        .unwrap();
    let e_first = study.rows.first().unwrap().errors.l2_u;
    let e_last = study.rows.last().unwrap().errors.l2_u;
    let monotone = study
        .rows
        .windows(2)
        .all(|w| w[1].errors.max_div <= w[0].errors.max_div * (1.0 + 1e-12));
    report(
        "7 locking robustness",
        study.underconstrained && e_last <= 10.0 * e_first && monotone,
        &format!(
            "underconstrained={}, err(0.3)={:.3e}, err(0.4999)={:.3e} (x{:.2}), max_div {:.2e} -> {:.2e}",
            study.underconstrained,
            e_first,
            e_last,
            e_last / e_first,
            study.rows.first().unwrap().errors.max_div,
            study.rows.last().unwrap().errors.max_div,
        ),
    );
}

#[test]
fn criterion_8_scale_invariance() {
    let mesh = generate_mesh(MeshKind::Cartesian, 4, 4, 0.0, 0).unwrap();
    let scaled = mesh.scaled(2.0);
    let mats = MaterialField::constant(mesh.n_cells(), 1.0, 1.0);
    let variant = VariantConfig::default();
    let data = ProblemData::homogeneous();

    let run = |m: &MeshTriplet| {
        let geo = compute_geometry(m).unwrap();
        let sols = solve_all_vertices(m, &geo, &mats, &variant, Some(&data)).unwrap();
        let rep = audit(m, &geo, &mats, &sols, None);
        let sys = assemble(m, &geo, &data, &sols).unwrap();
        let global = estimate_global_coercivity(m, &sys).unwrap();
        (rep, global, sols)
    };
    let (rep1, g1, sols1) = run(&mesh);
    let (rep2, g2, sols2) = run(&scaled);

    let mut worst = (g1 - g2).abs() / g1.abs().max(1e-300);
    for (a, b) in sols1.iter().zip(&sols2) {
        worst = worst.max((a.theta1 - b.theta1).abs() / a.theta1.max(1e-300));
    }
    for (a, b) in rep1.per_vertex.iter().zip(&rep2.per_vertex) {
        if let (Some(t1), Some(t2)) = (a.theta2, b.theta2) {
            worst = worst.max((t1 - t2).abs() / t1.abs().max(1e-300));
        }
    }
    report(
        "8 scale invariance",
        worst <= 1e-8,
        &format!("worst relative change {worst:.2e}, global estimate {g1:.4}"),
    );
}

#[test]
fn criterion_9_space_inequalities() {
    let mut worst_tc = f64::NEG_INFINITY;
    let mut worst_cd = f64::NEG_INFINITY;
    for (_, mesh) in shipped_meshes() {
        let geo = compute_geometry(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let c = CField::random(&mesh, 2, &mut rng);
            let tn = t_norm(&mesh, &project_t_cells(2, &c.cell));
            let cn = c_norm(&mesh, &geo, &c);
            worst_tc = worst_tc.max(tn - 2.0f64.sqrt() * cn);

            let d = DField::random(&mesh, &geo, 2, &mut rng);
            let pc = project_c(&mesh, &geo, &d);
            worst_cd = worst_cd.max(c_norm(&mesh, &geo, &pc) - d_norm(&mesh, &geo, &d));
        }
    }
    report(
        "9 space inequalities",
        worst_tc <= 1e-12 && worst_cd <= 1e-12,
        &format!("worst |Pi_T u|_T - sqrt(2)|u|_C = {worst_tc:.2e}, worst |Pi_C u|_C - |u|_D = {worst_cd:.2e}"),
    );
}

//! Batch front end: a flat `key = value` config with `[sections]` drives mesh
//! generation, solving, the coercivity audit and the study commands, writing
//! CSV/JSON artifacts plus a manifest echoing the resolved configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 coercivity audit failure.

use crate::coercivity::{audit, CoercivityReport};
use crate::fields::MaterialField;
use crate::geometry::{Mat2, Vec2};
use crate::global::{assemble_variant, recover_tractions, solve_all_vertices, SolveMethod, SolverOptions};
use crate::local::LocalError;
use crate::mesh::generate::{generate_mesh, MeshKind};
use crate::mesh::io::{load_mesh, save_mesh};
use crate::mesh::{compute_geometry_with, BoundaryTag, MeshTriplet};
use crate::parallel::set_threads;
use crate::variants::{Method, VariantConfig};
use crate::verification::{
    case_cubic, case_divfree, case_linear, case_scalar_linear, case_scalar_trig, case_trig,
    convergence_study, locking_study, ErrorTable, ManufacturedCase,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: msg.into() }
    }

    fn numerical(msg: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: msg.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Parsed config: section -> key -> value, with consumption tracking so
/// unknown keys are rejected.
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
    consumed: std::cell::RefCell<BTreeSet<(String, String)>>,
    pub path: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.to_path_buf())
    }

    pub fn parse(text: &str, path: PathBuf) -> Result<Self, CliError> {
        let mut section = String::new();
        let mut values = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    ln + 1
                )));
            };
            values.insert((section.clone(), k.trim().to_string()), v.trim().to_string());
        }
        Ok(Self { values, consumed: Default::default(), path })
    }

    fn get(&self, section: &str, key: &str) -> Option<String> {
        let k = (section.to_string(), key.to_string());
        let v = self.values.get(&k).cloned();
        if v.is_some() {
            self.consumed.borrow_mut().insert(k);
        }
        v
    }

    fn req(&self, section: &str, key: &str) -> Result<String, CliError> {
        self.get(section, key)
            .ok_or_else(|| CliError::config(format!("missing [{section}] {key}")))
    }

    fn parse_as<T: std::str::FromStr>(&self, section: &str, key: &str, v: &str) -> Result<T, CliError> {
        v.parse::<T>()
            .map_err(|_| CliError::config(format!("bad value `{v}` for [{section}] {key}")))
    }

    fn opt<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => self.parse_as(section, key, &v),
        }
    }

    fn reject_unknown(&self) -> Result<(), CliError> {
        let consumed = self.consumed.borrow();
        for k in self.values.keys() {
            if !consumed.contains(k) {
                return Err(CliError::config(format!("unknown config key [{}] {}", k.0, k.1)));
            }
        }
        Ok(())
    }

    /// Resolved-config manifest: every key as parsed, sorted.
    fn manifest(&self, extra: &[(String, String)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# resolved configuration ({})", self.path.display());
        let mut last = String::from("\u{0}");
        for ((sec, key), val) in &self.values {
            if *sec != last {
                let _ = writeln!(out, "[{sec}]");
                last = sec.clone();
            }
            let _ = writeln!(out, "{key} = {val}");
        }
        if !extra.is_empty() {
            let _ = writeln!(out, "[derived]");
            for (k, v) in extra {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

fn fnum(v: f64) -> String {
    format!("{v:.16e}")
}

fn build_mesh(cfg: &RunConfig) -> Result<MeshTriplet, CliError> {
    let mut mesh = if let Some(path) = cfg.get("mesh", "path") {
        load_mesh(Path::new(&path))
            .map_err(|e| CliError::config(format!("mesh file {path}: {e}")))?
    } else {
        let kind: MeshKind = cfg
            .req("mesh", "kind")?
            .parse()
            .map_err(|e: String| CliError::config(e))?;
        let nx: usize = cfg.opt("mesh", "nx", 4)?;
        let ny: usize = cfg.opt("mesh", "ny", nx)?;
        let pert: f64 = cfg.opt("mesh", "perturbation", 0.0)?;
        let seed: u64 = cfg.opt("mesh", "seed", 0)?;
        generate_mesh(kind, nx, ny, pert, seed)
            .map_err(|e| CliError::config(format!("mesh generation: {e}")))?
    };
    let scale: f64 = cfg.opt("mesh", "scale", 1.0)?;
    if scale != 1.0 {
        mesh = mesh.scaled(scale);
    }
    apply_bc(cfg, &mut mesh)?;
    Ok(mesh)
}

fn parse_boxes(s: &str) -> Result<Vec<[f64; 4]>, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let nums: Result<Vec<f64>, _> = p.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 4 => Ok([v[0], v[1], v[2], v[3]]),
                _ => Err(format!("bad box spec `{p}` (want x0,y0,x1,y1)")),
            }
        })
        .collect()
}

fn apply_bc(cfg: &RunConfig, mesh: &mut MeshTriplet) -> Result<(), CliError> {
    let default = match cfg.opt("bc", "default", "dirichlet".to_string())?.as_str() {
        "dirichlet" => BoundaryTag::Dirichlet,
        "neumann" => BoundaryTag::Neumann,
        other => return Err(CliError::config(format!("bad bc default `{other}`"))),
    };
    let nboxes = match cfg.get("bc", "neumann_boxes") {
        Some(s) => parse_boxes(&s).map_err(CliError::config)?,
        None => Vec::new(),
    };
    let dboxes = match cfg.get("bc", "dirichlet_boxes") {
        Some(s) => parse_boxes(&s).map_err(CliError::config)?,
        None => Vec::new(),
    };
    let inside = |b: &[f64; 4], p: Vec2| p.x >= b[0] && p.y >= b[1] && p.x <= b[2] && p.y <= b[3];
    mesh.retag_boundary(|mid| {
        if dboxes.iter().any(|b| inside(b, mid)) {
            BoundaryTag::Dirichlet
        } else if nboxes.iter().any(|b| inside(b, mid)) {
            BoundaryTag::Neumann
        } else {
            default
        }
    });
    Ok(())
}

fn build_materials(cfg: &RunConfig, ncells: usize) -> Result<(MaterialField, f64, f64), CliError> {
    let mu: f64 = cfg.opt("material", "mu", 1.0)?;
    let lambda: f64 = cfg.opt("material", "lambda", 1.0)?;
    let mats = if let Some(path) = cfg.get("material", "path") {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("material file {path}: {e}")))?;
        let mut m = MaterialField { mu: Vec::new(), lambda: Vec::new() };
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 2 {
                return Err(CliError::config(format!(
                    "material file line {}: want `mu,lambda`",
                    ln + 1
                )));
            }
            let pm = parts[0].trim().parse::<f64>();
            let pl = parts[1].trim().parse::<f64>();
            match (pm, pl) {
                (Ok(a), Ok(b)) => {
                    m.mu.push(a);
                    m.lambda.push(b);
                }
                _ => return Err(CliError::config(format!("material file line {}", ln + 1))),
            }
        }
        if m.mu.len() != ncells {
            return Err(CliError::config(format!(
                "material file has {} rows, mesh has {ncells} cells",
                m.mu.len()
            )));
        }
        m
    } else {
        MaterialField::constant(ncells, mu, lambda)
    };
    mats.validate(1e-12, 1e12).map_err(|e| CliError::config(e.to_string()))?;
    Ok((mats, mu, lambda))
}

fn build_variant(cfg: &RunConfig) -> Result<VariantConfig, CliError> {
    let method: Method = cfg
        .opt("variant", "method", "mpsa_full".to_string())?
        .parse()
        .map_err(|e: String| CliError::config(e))?;
    Ok(VariantConfig {
        method,
        eta: cfg.opt("variant", "eta", 1.0 / 3.0)?,
        force: cfg.opt("variant", "force", false)?,
        alpha_override: cfg.get("variant", "alpha").map(|v| cfg.parse_as("variant", "alpha", &v)).transpose()?,
    })
}

fn build_solver(cfg: &RunConfig) -> Result<SolverOptions, CliError> {
    let method = match cfg.opt("solver", "method", "auto".to_string())?.as_str() {
        "auto" => SolveMethod::Auto,
        "direct" => SolveMethod::Direct,
        "cg" => SolveMethod::Cg,
        other => return Err(CliError::config(format!("bad solver method `{other}`"))),
    };
    set_threads(cfg.opt("solver", "threads", 0)?);
    Ok(SolverOptions {
        method,
        tol: cfg.opt("solver", "tol", 1e-12)?,
        max_iter: cfg.opt("solver", "max_iter", 0)?,
    })
}

fn build_case(cfg: &RunConfig, mu: f64, lambda: f64) -> Result<ManufacturedCase, CliError> {
    let name = cfg.opt("problem", "case", "linear".to_string())?;
    let case = match name.as_str() {
        "linear" => {
            let m = cfg.opt("problem", "matrix", "1,0,0,1".to_string())?;
            let nums: Result<Vec<f64>, _> = m.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let v = nums.map_err(|_| CliError::config(format!("bad [problem] matrix `{m}`")))?;
            if v.len() != 4 {
                return Err(CliError::config("matrix wants 4 entries a11,a12,a21,a22"));
            }
            case_linear(Mat2::new(v[0], v[1], v[2], v[3]), mu, lambda)
        }
        "trig" => case_trig(mu, lambda),
        "cubic" => case_cubic(mu, lambda),
        "divfree" => case_divfree(mu, lambda),
        "scalar_trig" => case_scalar_trig(mu),
        "scalar_linear" => {
            let m = cfg.opt("problem", "vector", "1,0".to_string())?;
            let nums: Result<Vec<f64>, _> = m.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let v = nums.map_err(|_| CliError::config(format!("bad [problem] vector `{m}`")))?;
            if v.len() != 2 {
                return Err(CliError::config("vector wants 2 entries ax,ay"));
            }
            case_scalar_linear(Vec2::new(v[0], v[1]), mu)
        }
        other => return Err(CliError::config(format!("unknown case `{other}`"))),
    };
    Ok(case)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.opt("output", "dir", "out".to_string())?);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("cannot create output dir: {e}")))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn numerical_from_local(e: &LocalError) -> CliError {
    CliError::numerical(e.to_string())
}

/// Generate a mesh and write it in the text format.
pub fn cmd_meshgen(cfg: &RunConfig) -> Result<(), CliError> {
    let mesh = build_mesh(cfg)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;
    save_mesh(&mesh, &dir.join("mesh.txt"))
        .map_err(|e| CliError::config(format!("write mesh: {e}")))?;
    write_file(
        &dir.join("manifest.txt"),
        &cfg.manifest(&[
            ("cells".into(), mesh.n_cells().to_string()),
            ("faces".into(), mesh.n_faces().to_string()),
            ("vertices".into(), mesh.n_vertices().to_string()),
        ]),
    )?;
    Ok(())
}

/// Solve one problem; writes solution.csv, tractions.csv and the manifest.
pub fn cmd_solve(cfg: &RunConfig) -> Result<(), CliError> {
    let mesh = build_mesh(cfg)?;
    let (mats, mu, lambda) = build_materials(cfg, mesh.n_cells())?;
    let variant = build_variant(cfg)?;
    let opts = build_solver(cfg)?;
    let case = build_case(cfg, mu, lambda)?;
    let dump_local = cfg.opt("output", "dump_local", false)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;

    variant.validate(&mesh, &mats).map_err(|e| CliError::config(e.to_string()))?;
    let geo = compute_geometry_with(&mesh, variant.quadrature())
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let data = case.problem_data();
    let sols = solve_all_vertices(&mesh, &geo, &mats, &variant, Some(&data))
        .map_err(|e| numerical_from_local(&e))?;
    let sys = assemble_variant(&mesh, &geo, &mats, &variant, &data, &sols)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    if sys.pure_neumann {
        data.check_neumann_compatibility(&mesh, &geo, 1e-8)
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let res = sys.solve(opts).map_err(|e| CliError::numerical(e.to_string()))?;

    let mut csv = String::from("cell_id,x,y,ux,uy\n");
    for c in 0..mesh.n_cells() {
        let p = mesh.cell_centers[c];
        let u = res.u.get(c);
        let uy = if res.u.ncomp == 2 { u[1] } else { 0.0 };
        let _ = writeln!(csv, "{c},{},{},{},{}", fnum(p.x), fnum(p.y), fnum(u[0]), fnum(uy));
    }
    write_file(&dir.join("solution.csv"), &csv)?;

    let tractions = recover_tractions(&mesh, &sols, &res.u);
    let mut tcsv = String::from("face_id,side_cell,Tx,Ty\n");
    for (fi, sides) in tractions.iter().enumerate() {
        for &(cell, t) in sides {
            let _ = writeln!(tcsv, "{fi},{cell},{},{}", fnum(t.x), fnum(t.y));
        }
    }
    write_file(&dir.join("tractions.csv"), &tcsv)?;

    if dump_local {
        let dump: Vec<serde_json::Value> = sols
            .iter()
            .map(|s| {
                serde_json::json!({
                    "vertex": s.region.vertex,
                    "cells": s.region.cells.iter().map(|c| c.cell).collect::<Vec<_>>(),
                    "gradient_map": s.grad_map.as_slice(),
                    "gradient_data": s.grad_data.as_slice(),
                    "theta1": s.theta1,
                })
            })
            .collect();
        write_file(
            &dir.join("local_debug.json"),
            &serde_json::to_string_pretty(&dump).expect("serializable"),
        )?;
    }

    write_file(
        &dir.join("manifest.txt"),
        &cfg.manifest(&[
            ("cells".into(), mesh.n_cells().to_string()),
            ("residual".into(), fnum(res.residual)),
            ("iterations".into(), res.iterations.to_string()),
            ("nullspace_projected".into(), res.nullspace_projected.to_string()),
        ]),
    )?;
    Ok(())
}

/// Run the coercivity audit; exit code 4 when any vertex fails.
pub fn cmd_coercivity(cfg: &RunConfig) -> Result<CoercivityReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let (mats, _, _) = build_materials(cfg, mesh.n_cells())?;
    let variant = build_variant(cfg)?;
    let _opts = build_solver(cfg)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;

    variant.validate(&mesh, &mats).map_err(|e| CliError::config(e.to_string()))?;
    let geo = compute_geometry_with(&mesh, variant.quadrature())
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let sols = solve_all_vertices(&mesh, &geo, &mats, &variant, None)
        .map_err(|e| numerical_from_local(&e))?;
    let data = crate::fields::ProblemData::homogeneous();
    let sys = assemble_variant(&mesh, &geo, &mats, &variant, &data, &sols)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let report = audit(&mesh, &geo, &mats, &sols, Some(&sys));

    write_file(
        &dir.join("coercivity.json"),
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    write_file(
        &dir.join("manifest.txt"),
        &cfg.manifest(&[
            ("audit_pass".into(), report.global.audit_pass.to_string()),
            (
                "theta2_min".into(),
                report.global.theta2_min.map(fnum).unwrap_or_else(|| "none".into()),
            ),
            ("theta1_max".into(), fnum(report.global.theta1_max)),
        ]),
    )?;
    if !report.global.audit_pass {
        return Err(CliError { code: EXIT_AUDIT, message: "coercivity audit failed".into() });
    }
    Ok(report)
}

fn error_table_csv(table: &ErrorTable) -> String {
    let mut csv = String::from("level,h,err_l2_u,err_T_u,err_stress,rate_l2,rate_stress\n");
    for row in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.level,
            fnum(row.h),
            fnum(row.errors.l2_u),
            fnum(row.errors.t_u),
            fnum(row.errors.stress),
            row.rate_l2.map(fnum).unwrap_or_default(),
            row.rate_stress.map(fnum).unwrap_or_default(),
        );
    }
    csv
}

/// Refinement study over a mesh family.
pub fn cmd_convergence(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, mu, lambda) = build_materials(cfg, 1)?;
    let variant = build_variant(cfg)?;
    let opts = build_solver(cfg)?;
    let case = build_case(cfg, mu, lambda)?;
    let family: MeshKind = cfg
        .opt("study", "family", "cartesian".to_string())?
        .parse()
        .map_err(|e: String| CliError::config(e))?;
    let levels: Vec<usize> = cfg
        .opt("study", "levels", "4,8,16".to_string())?
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::config("bad [study] levels"))?;
    let pert: f64 = cfg.opt("study", "perturbation", 0.0)?;
    let seed: u64 = cfg.opt("study", "seed", 1000)?;
    let audit_levels: bool = cfg.opt("study", "audit_levels", false)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;

    let table = convergence_study(&case, family, &levels, pert, seed, &variant, opts, audit_levels)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    write_file(&dir.join("convergence.csv"), &error_table_csv(&table))?;
    let flagged = table.rows.iter().filter(|r| r.coercivity_flagged).count();
    write_file(
        &dir.join("manifest.txt"),
        &cfg.manifest(&[
            ("levels".into(), table.rows.len().to_string()),
            ("flagged_levels".into(), flagged.to_string()),
        ]),
    )?;
    Ok(())
}

/// Poisson-ratio sweep on one mesh.
pub fn cmd_locking(cfg: &RunConfig) -> Result<(), CliError> {
    let mesh = build_mesh(cfg)?;
    let (_, mu, _) = build_materials(cfg, mesh.n_cells())?;
    let variant = build_variant(cfg)?;
    let opts = build_solver(cfg)?;
    let nus: Vec<f64> = cfg
        .opt("study", "nus", "0.3,0.4,0.49,0.499,0.4999".to_string())?
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::config("bad [study] nus"))?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;

    let study = locking_study(&mesh, &nus, mu, &variant, opts)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let h = mesh.h_max();
    let mut csv =
        String::from("level,h,err_l2_u,err_T_u,err_stress,rate_l2,rate_stress,nu,max_div\n");
    for (i, row) in study.rows.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},,,{},{}",
            fnum(h),
            fnum(row.errors.l2_u),
            fnum(row.errors.t_u),
            fnum(row.errors.stress),
            fnum(row.nu),
            fnum(row.errors.max_div),
        );
    }
    write_file(&dir.join("locking.csv"), &csv)?;
    write_file(
        &dir.join("manifest.txt"),
        &cfg.manifest(&[
            ("underconstrained".into(), study.underconstrained.to_string()),
            ("card_vertices".into(), study.card_vertices.to_string()),
            ("d_card_cells".into(), study.d_card_cells.to_string()),
        ]),
    )?;
    Ok(())
}

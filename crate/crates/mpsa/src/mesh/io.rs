//! Text format for mesh triplets.
//!
//! ```text
//! MPSA-MESH 2D 1
//! VERTICES <n>        then n lines: <x> <y>
//! CELLS <n>           then n lines: <k> <v1> ... <vk>   (CCW, 0-based)
//! BOUNDARY <n>        then n lines: <vA> <vB> <tag>     (tag in {D,N})
//! ```
//!
//! Floating point is written with 17 significant digits so a save/load round
//! trip reproduces coordinates bit for bit. Lines starting with `#` are
//! comments.

use super::{BoundaryTag, MeshError, MeshTriplet};
use crate::geometry::Vec2;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshParseError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unexpected end of file while reading {what}")]
    UnexpectedEof { what: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn save_mesh(mesh: &MeshTriplet, path: &Path) -> Result<(), MeshParseError> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn format_mesh(mesh: &MeshTriplet) -> String {
    let mut out = String::new();
    out.push_str("MPSA-MESH 2D 1\n");
    let _ = writeln!(out, "VERTICES {}", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.16e} {:.16e}", v.x, v.y);
    }
    let _ = writeln!(out, "CELLS {}", mesh.n_cells());
    for poly in &mesh.cells {
        let _ = write!(out, "{}", poly.len());
        for v in poly {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    let boundary: Vec<(usize, usize, BoundaryTag)> = mesh
        .faces
        .iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            mesh.boundary_tags[fi].map(|t| (f.verts[0].min(f.verts[1]), f.verts[0].max(f.verts[1]), t))
        })
        .collect();
    let _ = writeln!(out, "BOUNDARY {}", boundary.len());
    for (a, b, t) in boundary {
        let tag = match t {
            BoundaryTag::Dirichlet => "D",
            BoundaryTag::Neumann => "N",
        };
        let _ = writeln!(out, "{a} {b} {tag}");
    }
    out
}

pub fn load_mesh(path: &Path) -> Result<MeshTriplet, MeshError> {
    let text = std::fs::read_to_string(path).map_err(MeshParseError::from)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<MeshTriplet, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |what: &str| -> Result<(usize, &str), MeshParseError> {
        lines.next().ok_or_else(|| MeshParseError::UnexpectedEof { what: what.to_string() })
    };

    let (ln, header) = next("header")?;
    if header != "MPSA-MESH 2D 1" {
        return Err(MeshParseError::Parse { line: ln, msg: format!("bad header `{header}`") }.into());
    }

    let count_after = |line: usize, l: &str, kw: &str| -> Result<usize, MeshParseError> {
        let mut it = l.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(k), Some(n), None) if k == kw => n.parse::<usize>().map_err(|_| {
                MeshParseError::Parse { line, msg: format!("bad count `{n}`") }
            }),
            _ => Err(MeshParseError::Parse { line, msg: format!("expected `{kw} <n>`") }),
        }
    };

    let (ln, l) = next("VERTICES")?;
    let nverts = count_after(ln, l, "VERTICES")?;
    let mut vertices = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let (ln, l) = next("vertex line")?;
        let nums: Vec<&str> = l.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(MeshParseError::Parse { line: ln, msg: "expected `<x> <y>`".into() }.into());
        }
        let parse = |s: &str| -> Result<f64, MeshParseError> {
            s.parse::<f64>()
                .map_err(|_| MeshParseError::Parse { line: ln, msg: format!("bad float `{s}`") })
        };
        vertices.push(Vec2::new(parse(nums[0])?, parse(nums[1])?));
    }

    let (ln, l) = next("CELLS")?;
    let ncells = count_after(ln, l, "CELLS")?;
    let mut cells = Vec::with_capacity(ncells);
    for c in 0..ncells {
        let (ln, l) = next("cell line")?;
        let nums: Vec<&str> = l.split_whitespace().collect();
        if nums.is_empty() {
            return Err(MeshParseError::Parse { line: ln, msg: "empty cell record".into() }.into());
        }
        let k: usize = nums[0].parse().map_err(|_| MeshParseError::Parse {
            line: ln,
            msg: format!("bad vertex count `{}`", nums[0]),
        })?;
        if nums.len() != k + 1 {
            return Err(MeshParseError::Parse {
                line: ln,
                msg: format!("cell {c} declares {k} vertices but lists {}", nums.len() - 1),
            }
            .into());
        }
        let mut poly = Vec::with_capacity(k);
        for s in &nums[1..] {
            let v: usize = s.parse().map_err(|_| MeshParseError::Parse {
                line: ln,
                msg: format!("bad vertex index `{s}`"),
            })?;
            if v >= nverts {
                return Err(MeshParseError::Parse {
                    line: ln,
                    msg: format!("cell {c} references vertex index {v} out of range ({nverts} vertices)"),
                }
                .into());
            }
            poly.push(v);
        }
        cells.push(poly);
    }

    let (ln, l) = next("BOUNDARY")?;
    let nbdry = count_after(ln, l, "BOUNDARY")?;
    let mut tags = HashMap::new();
    for _ in 0..nbdry {
        let (ln, l) = next("boundary line")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(
                MeshParseError::Parse { line: ln, msg: "expected `<vA> <vB> <tag>`".into() }.into()
            );
        }
        let pv = |s: &str| -> Result<usize, MeshParseError> {
            s.parse::<usize>()
                .map_err(|_| MeshParseError::Parse { line: ln, msg: format!("bad index `{s}`") })
        };
        let a = pv(parts[0])?;
        let b = pv(parts[1])?;
        let tag = match parts[2] {
            "D" => BoundaryTag::Dirichlet,
            "N" => BoundaryTag::Neumann,
            other => {
                return Err(MeshParseError::Parse {
                    line: ln,
                    msg: format!("bad tag `{other}` (expected D or N)"),
                }
                .into())
            }
        };
        tags.insert((a.min(b), a.max(b)), tag);
    }

    MeshTriplet::from_cells(vertices, cells, &tags)
}

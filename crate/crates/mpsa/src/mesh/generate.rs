//! Built-in mesh families: Cartesian and perturbed quadrilaterals and
//! triangulations of the unit square, equilateral triangulations of a rhombus,
//! and honeycomb (hexagonal dual) patches.

use super::{BoundaryTag, MeshError, MeshTriplet};
use crate::geometry::Vec2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    Cartesian,
    Triangulated,
    PerturbedQuad,
    EquilateralTri,
    HexagonalDual,
}

impl FromStr for MeshKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cartesian" => Ok(Self::Cartesian),
            "triangulated" => Ok(Self::Triangulated),
            "perturbed_quad" => Ok(Self::PerturbedQuad),
            "equilateral_tri" => Ok(Self::EquilateralTri),
            "hexagonal_dual" => Ok(Self::HexagonalDual),
            other => Err(format!("unknown mesh kind `{other}`")),
        }
    }
}

fn all_dirichlet(vertices: &[Vec2], cells: &[Vec<usize>]) -> HashMap<(usize, usize), BoundaryTag> {
    // Tag every cell edge; interior pairs are ignored by the constructor.
    let _ = vertices;
    let mut tags = HashMap::new();
    for poly in cells {
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            tags.insert((a.min(b), a.max(b)), BoundaryTag::Dirichlet);
        }
    }
    tags
}

/// Generate one of the built-in families. `perturbation` is the interior
/// vertex displacement as a fraction of h (only used by `PerturbedQuad` and
/// `Triangulated`); `seed` fixes the displacement realization.
pub fn generate_mesh(
    kind: MeshKind,
    nx: usize,
    ny: usize,
    perturbation: f64,
    seed: u64,
) -> Result<MeshTriplet, MeshError> {
    assert!(nx >= 1 && ny >= 1, "resolution must be at least 1 per axis");
    assert!(
        (0.0..0.4).contains(&perturbation),
        "perturbation must lie in [0, 0.4)"
    );
    match kind {
        MeshKind::Cartesian => cartesian(nx, ny, 0.0, 0),
        MeshKind::PerturbedQuad => cartesian(nx, ny, perturbation, seed),
        MeshKind::Triangulated => triangulated(nx, ny, perturbation, seed),
        MeshKind::EquilateralTri => equilateral(nx, ny),
        MeshKind::HexagonalDual => honeycomb(nx, ny),
    }
}

fn grid_vertices(nx: usize, ny: usize, perturbation: f64, seed: u64) -> Vec<Vec2> {
    let hx = 1.0 / nx as f64;
    let hy = 1.0 / ny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut p = Vec2::new(i as f64 * hx, j as f64 * hy);
            if perturbation > 0.0 && i > 0 && i < nx && j > 0 && j < ny {
                let dx: f64 = rng.gen_range(-1.0..1.0);
                let dy: f64 = rng.gen_range(-1.0..1.0);
                p.x += perturbation * hx * dx;
                p.y += perturbation * hy * dy;
            }
            vertices.push(p);
        }
    }
    vertices
}

fn cartesian(nx: usize, ny: usize, perturbation: f64, seed: u64) -> Result<MeshTriplet, MeshError> {
    let vertices = grid_vertices(nx, ny, perturbation, seed);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let tags = all_dirichlet(&vertices, &cells);
    MeshTriplet::from_cells(vertices, cells, &tags).map_err(|e| match e {
        MeshError::NotStarShaped { cell, .. } if perturbation > 0.0 => {
            MeshError::BadPerturbation { cell }
        }
        other => other,
    })
}

fn triangulated(
    nx: usize,
    ny: usize,
    perturbation: f64,
    seed: u64,
) -> Result<MeshTriplet, MeshError> {
    let vertices = grid_vertices(nx, ny, perturbation, seed);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            // Alternate the diagonal direction checkerboard-wise.
            if (i + j) % 2 == 0 {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            } else {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            }
        }
    }
    let tags = all_dirichlet(&vertices, &cells);
    MeshTriplet::from_cells(vertices, cells, &tags).map_err(|e| match e {
        MeshError::NotStarShaped { cell, .. } if perturbation > 0.0 => {
            MeshError::BadPerturbation { cell }
        }
        other => other,
    })
}

/// Uniform equilateral triangulation of a rhombus with sides (1,0)·nx and
/// (1/2, sqrt3/2)·ny, scaled so the horizontal side has length 1.
fn equilateral(nx: usize, ny: usize) -> Result<MeshTriplet, MeshError> {
    let h = 1.0 / nx as f64;
    let s3 = 3.0f64.sqrt() / 2.0;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(h * (i as f64 + 0.5 * j as f64), h * s3 * j as f64));
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![vid(i, j), vid(i + 1, j), vid(i, j + 1)]);
            cells.push(vec![vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let tags = all_dirichlet(&vertices, &cells);
    MeshTriplet::from_cells(vertices, cells, &tags)
}

/// Honeycomb of nx x ny flat-top regular hexagons with unit side length
/// scaled by 1/nx. Vertex dedup uses the exact half-integer lattice the
/// hexagon corners live on.
fn honeycomb(nx: usize, ny: usize) -> Result<MeshTriplet, MeshError> {
    let a = 1.0 / nx as f64; // hexagon side
    let ux = 0.5 * a;
    let uy = 0.5 * a * 3.0f64.sqrt();
    // Corner offsets from the center, in (ux, uy) units, CCW from the right.
    let offsets: [(i64, i64); 6] = [(2, 0), (1, 1), (-1, 1), (-2, 0), (-1, -1), (1, -1)];
    let mut key_to_id: HashMap<(i64, i64), usize> = HashMap::new();
    let mut vertices: Vec<Vec2> = Vec::new();
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny as i64 {
        for i in 0..nx as i64 {
            let center = (3 * i, 2 * j + (i & 1));
            let mut poly = Vec::with_capacity(6);
            for (dx, dy) in offsets {
                let key = (center.0 + dx, center.1 + dy);
                let id = *key_to_id.entry(key).or_insert_with(|| {
                    vertices.push(Vec2::new(key.0 as f64 * ux, key.1 as f64 * uy));
                    vertices.len() - 1
                });
                poly.push(id);
            }
            cells.push(poly);
        }
    }
    let tags = all_dirichlet(&vertices, &cells);
    MeshTriplet::from_cells(vertices, cells, &tags)
}

//! Property tests for the mesh text format.

use mpsa::mesh::generate::{generate_mesh, MeshKind};
use mpsa::mesh::io::{format_mesh, parse_mesh};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Save -> load reproduces topology exactly and coordinates bit for bit
    /// across generator families, sizes and perturbation seeds.
    #[test]
    fn round_trip_is_exact(
        kind_idx in 0usize..5,
        nx in 1usize..6,
        ny in 1usize..6,
        pert in 0.0f64..0.35,
        seed in 0u64..1000,
    ) {
        let kind = [
            MeshKind::Cartesian,
            MeshKind::Triangulated,
            MeshKind::PerturbedQuad,
            MeshKind::EquilateralTri,
            MeshKind::HexagonalDual,
        ][kind_idx];
        let pert = if kind == MeshKind::PerturbedQuad || kind == MeshKind::Triangulated {
            pert
        } else {
            0.0
        };
        let mesh = generate_mesh(kind, nx, ny, pert, seed).unwrap();
        let text = format_mesh(&mesh);
        let back = parse_mesh(&text).unwrap();
        prop_assert_eq!(&mesh.cells, &back.cells);
        prop_assert_eq!(mesh.n_faces(), back.n_faces());
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
            prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        for (ta, tb) in mesh.boundary_tags.iter().zip(&back.boundary_tags) {
            prop_assert_eq!(ta, tb);
        }
        // And the round trip of the round trip is textually identical.
        prop_assert_eq!(format_mesh(&back), text);
    }
}

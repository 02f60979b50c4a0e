//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use mpsa::mesh::MeshTriplet;

/// First vertex all of whose faces are interior.
pub fn interior_vertices(mesh: &MeshTriplet) -> Vec<usize> {
    (0..mesh.n_vertices())
        .filter(|&v| {
            mesh.faces_of_vertex[v]
                .iter()
                .all(|&f| mesh.boundary_tags[f].is_none())
        })
        .collect()
}

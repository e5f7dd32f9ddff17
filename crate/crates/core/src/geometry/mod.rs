//! Mesh ingestion, normalisation into the unit voxel domain, surface
//! voxelisation and orthographic depth rendering.
//!
//! World axes: `x`/`y` span the ground plane and `z` points up. The voxel
//! domain is the cube `[-0.5, 0.5]^3`; voxel `(i, j, k)` indexes `(x, y, z)`.

mod mesh;
mod render;
mod voxel;

pub use mesh::{load_off, normalize_mesh, TriangleMesh, Vec3, NORMALIZED_EXTENT};
pub use render::{
    render_depth, viewpoint_ring, DepthMap, Viewpoint, BACKGROUND_DEPTH, DEFAULT_DEPTH_SIZE,
    DEFAULT_ELEVATION_DEG,
};
pub use voxel::{triangle_box_overlap, voxelize, VoxelGrid, DOMAIN_HALF_EXTENT};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("truncated input: expected {expected} {what}, found {found}")]
    Truncation {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("face {face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    Index {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("mesh lies outside the voxel domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

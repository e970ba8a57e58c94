//! Fusion of a coarse-but-complete airborne point cloud and a detailed-but-incomplete
//! street-side point cloud into a single watertight surface mesh.
//!
//! The pipeline blends the two clouds by removing airborne points that have
//! street-side substitutes (graph-cut segmentation), builds a 3D Delaunay
//! tetrahedralization over the blended points, accumulates soft inside/outside
//! votes by walking each line of sight through the tetrahedra, labels every
//! tetrahedron by an exact s/t min-cut, and extracts the label boundary as the
//! output mesh. Data-reduction switches (voxel decimation, one ray per point,
//! ray truncation) trade accuracy for runtime.
//!
//! All geometric computation is generic over the scalar type via [`Real`];
//! `f64` is the default used by the shipped CLI.

pub mod blending;
pub mod cloud;
pub mod decimate;
pub mod delaunay;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod knn;
pub mod mesh;
pub mod mincut;
pub mod normals;
pub mod postprocess;
pub mod predicates;
pub mod rays;
pub mod scalar;
pub mod scene;

pub use cloud::{PointCloud, Ray, SensorSet, SourceTag};
pub use error::{Error, Result};
pub use geometry::{Point3, Vector3};
pub use mesh::TriangleMesh;
pub use scalar::Real;

/// Double-precision point, the scalar type used by the CLI pipeline.
pub type Point3d = Point3<f64>;
/// Double-precision vector.
pub type Vector3d = Vector3<f64>;
/// Single-precision point.
pub type Point3f = Point3<f32>;
/// Single-precision vector.
pub type Vector3f = Vector3<f32>;

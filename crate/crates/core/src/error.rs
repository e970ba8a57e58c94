//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("point {point}: sensor index {index} out of range (sensor set has {count} sensors)")]
    SensorIndexOutOfRange {
        point: usize,
        index: u32,
        count: usize,
    },

    #[error("point {point} has an empty visibility list; the pipeline requires lines of sight")]
    MissingVisibility { point: usize },

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("cloud has no normals; run normal estimation first")]
    MissingNormals,

    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("voxel index overflow: coordinates too large for voxel size {voxel_size}")]
    VoxelIndexOverflow { voxel_size: f64 },

    #[error("energy cost at node {node} must be finite and non-negative, got {value}")]
    InvalidCost { node: usize, value: f64 },

    #[error("duplicate undirected edge ({i}, {j}) in binary energy")]
    DuplicateEdge { i: usize, j: usize },

    #[error("edge ({i}, {j}) is invalid for {nodes} nodes")]
    InvalidEdge { i: usize, j: usize, nodes: usize },

    #[error("ray origin {vertex} is not a vertex of the tetrahedralization")]
    RayOriginNotVertex { vertex: usize },

    #[error("empty candidate mesh")]
    EmptyCandidateMesh,

    #[error("clouds do not overlap")]
    CloudsDoNotOverlap,

    #[error("estimated memory {estimated_mb} MB exceeds budget {budget_mb} MB for the tetrahedralization")]
    MemoryBudgetExceeded { estimated_mb: u64, budget_mb: u64 },

    #[error("out of memory while {0}")]
    OutOfMemory(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn invalid_param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            message: message.into(),
        }
    }
}

//! Voxel-grid decimation: one representative point per occupied voxel.
//!
//! The grid is anchored at the world origin with `floor(coord / voxel_size)`
//! per axis, packed into a 64-bit key, so results are reproducible across
//! runs. Only occupied voxels are stored. The output point is the centroid of
//! the voxel members, visibility is the set union of member visibilities, and
//! the source tag is a majority vote with ties going to street (street data is
//! the detail-preserving side). Normals are dropped; callers re-estimate them.

use std::collections::HashMap;

use crate::cloud::{PointCloud, SourceTag};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};
use crate::scalar::Real;

/// Per-axis voxel coordinates are packed into 21 bits each (signed), which
/// covers ±1,048,575 voxels from the origin on every axis.
const AXIS_BITS: i64 = 21;
const AXIS_OFFSET: i64 = 1 << (AXIS_BITS - 1);
const AXIS_MASK: i64 = (1 << AXIS_BITS) - 1;

/// Sparse accumulation grid mapping packed voxel keys to per-voxel state.
#[derive(Debug, Default)]
pub struct DecimationGrid<T> {
    pub voxel_size: T,
    cells: HashMap<i64, VoxelAccum<T>>,
}

#[derive(Debug, Clone)]
struct VoxelAccum<T> {
    sum: Vector3<T>,
    count: usize,
    visibility: Vec<u32>,
    aerial: usize,
    street: usize,
}

fn pack_key<T: Real>(p: Point3<T>, voxel_size: T) -> Result<i64> {
    let mut key = 0i64;
    for k in 0..3 {
        let v = (p.axis(k) / voxel_size).floor().to_f64().unwrap_or(f64::NAN);
        if !v.is_finite() || v < -(AXIS_OFFSET as f64) || v >= AXIS_OFFSET as f64 {
            return Err(Error::VoxelIndexOverflow {
                voxel_size: voxel_size.to_double(),
            });
        }
        let cell = v as i64 + AXIS_OFFSET;
        key = (key << AXIS_BITS) | (cell & AXIS_MASK);
    }
    Ok(key)
}

impl<T: Real> DecimationGrid<T> {
    pub fn new(voxel_size: T) -> Self {
        Self {
            voxel_size,
            cells: HashMap::new(),
        }
    }

    pub fn insert(&mut self, p: Point3<T>, visibility: &[u32], tag: SourceTag) -> Result<()> {
        let key = pack_key(p, self.voxel_size)?;
        let cell = self.cells.entry(key).or_insert_with(|| VoxelAccum {
            sum: Vector3::zero(),
            count: 0,
            visibility: Vec::new(),
            aerial: 0,
            street: 0,
        });
        cell.sum += p.coords();
        cell.count += 1;
        cell.visibility.extend_from_slice(visibility);
        match tag {
            SourceTag::Aerial => cell.aerial += 1,
            SourceTag::Street => cell.street += 1,
        }
        Ok(())
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }

    /// Emits one point per occupied voxel, in ascending key order so repeated
    /// runs produce identical output.
    pub fn finish(self) -> PointCloud<T> {
        let mut keys: Vec<i64> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        let mut out = PointCloud::new();
        out.points.reserve(keys.len());
        for key in keys {
            let cell = &self.cells[&key];
            let inv = T::one() / T::of(cell.count as f64);
            out.points.push((cell.sum * inv).to_point());
            let mut vis = cell.visibility.clone();
            vis.sort_unstable();
            vis.dedup();
            out.visibility.push(vis);
            out.source.push(if cell.street >= cell.aerial {
                SourceTag::Street
            } else {
                SourceTag::Aerial
            });
        }
        out
    }
}

/// Voxel decimation; `voxel_size = 0` disables and returns the input cloud.
pub fn decimate<T: Real>(cloud: &PointCloud<T>, voxel_size: T) -> Result<PointCloud<T>> {
    if voxel_size < T::zero() || !voxel_size.is_finite() {
        return Err(Error::invalid_param("voxel_size", "must be finite and >= 0"));
    }
    if voxel_size == T::zero() {
        return Ok(cloud.clone());
    }
    let mut grid = DecimationGrid::new(voxel_size);
    for i in 0..cloud.len() {
        grid.insert(cloud.points[i], &cloud.visibility[i], cloud.source[i])?;
    }
    Ok(grid.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_corners() -> PointCloud<f64> {
        let mut points = Vec::new();
        for z in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for x in [0.0, 1.0] {
                    points.push(Point3::new(x, y, z));
                }
            }
        }
        let mut cloud =
            PointCloud::with_uniform_tag(points, (0..8).map(|i| vec![i % 3]).collect(), SourceTag::Aerial);
        cloud.source[0] = SourceTag::Street;
        cloud
    }

    #[test]
    fn cube_collapses_to_single_centroid() {
        let cloud = cube_corners();
        let out = decimate(&cloud, 10.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.points[0], Point3::new(0.5, 0.5, 0.5));
        assert_eq!(out.visibility[0], vec![0, 1, 2]);
        // 1 street vs 7 aerial: majority wins.
        assert_eq!(out.source[0], SourceTag::Aerial);
    }

    #[test]
    fn zero_voxel_size_is_identity() {
        let cloud = cube_corners();
        let out = decimate(&cloud, 0.0).unwrap();
        assert_eq!(out.points, cloud.points);
        assert_eq!(out.visibility, cloud.visibility);
    }

    #[test]
    fn tie_goes_to_street() {
        let points = vec![Point3::new(0.1, 0.1, 0.1), Point3::new(0.2, 0.2, 0.2)];
        let mut cloud =
            PointCloud::with_uniform_tag(points, vec![vec![0], vec![1]], SourceTag::Aerial);
        cloud.source[1] = SourceTag::Street;
        let out = decimate(&cloud, 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.source[0], SourceTag::Street);
    }

    #[test]
    fn far_coordinates_overflow_cleanly() {
        let points = vec![Point3::new(1e12, 0.0, 0.0)];
        let cloud = PointCloud::with_uniform_tag(points, vec![vec![0]], SourceTag::Aerial);
        assert!(matches!(
            decimate(&cloud, 0.1),
            Err(Error::VoxelIndexOverflow { .. })
        ));
    }

    #[test]
    fn negative_coordinates_use_floor() {
        // -0.05 and +0.05 land in different voxels at size 0.1.
        let points = vec![Point3::new(-0.05, 0.0, 0.0), Point3::new(0.05, 0.0, 0.0)];
        let cloud = PointCloud::with_uniform_tag(points, vec![vec![0], vec![0]], SourceTag::Aerial);
        let out = decimate(&cloud, 0.1).unwrap();
        assert_eq!(out.len(), 2);
    }
}

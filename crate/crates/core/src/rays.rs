//! Construction of the line-of-sight ray set, with the optional
//! one-ray-per-point reduction.

use crate::cloud::{PointCloud, Ray, SensorSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bookkeeping from ray construction, surfaced in the run report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RayBuildStats {
    pub rays: usize,
    /// Points skipped because they had no usable line of sight.
    pub skipped_points: usize,
}

/// Builds the ray set.
///
/// With `reduce_to_one` unset, every (point, visible sensor) pair becomes a
/// ray. With it set, each point keeps only the ray closest to its normal
/// direction (maximum cosine between point→sensor and the normal), ties
/// resolved to the lowest sensor index; the cloud must carry normals. Points
/// with an invalid normal fall back to the lowest visible sensor index.
/// Zero-length rays (sensor coincident with the point) are discarded.
pub fn build_rays<T: Real>(
    cloud: &PointCloud<T>,
    sensors: &SensorSet<T>,
    reduce_to_one: bool,
) -> Result<(Vec<Ray<T>>, RayBuildStats)> {
    if reduce_to_one && !cloud.has_normals() {
        return Err(Error::MissingNormals);
    }
    let mut rays = Vec::new();
    let mut stats = RayBuildStats::default();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let vis = &cloud.visibility[i];
        if vis.is_empty() {
            stats.skipped_points += 1;
            continue;
        }
        if reduce_to_one {
            let normal = cloud.valid_normal(i);
            let mut best: Option<(T, u32)> = None;
            for &s in vis {
                let sensor = sensors.positions[s as usize];
                let dir = sensor - p;
                let len = dir.norm();
                if len <= T::zero() {
                    continue;
                }
                let cos = match normal {
                    Some(n) => n.dot(dir) / len,
                    None => T::zero(),
                };
                let better = match best {
                    None => true,
                    Some((best_cos, best_s)) => {
                        cos > best_cos || (cos == best_cos && s < best_s)
                    }
                };
                if better {
                    best = Some((cos, s));
                }
            }
            match best {
                Some((_, s)) => rays.push(Ray {
                    origin_vertex: i as u32,
                    sensor: sensors.positions[s as usize],
                }),
                None => stats.skipped_points += 1,
            }
        } else {
            let mut emitted = false;
            for &s in vis {
                let sensor = sensors.positions[s as usize];
                if (sensor - p).norm_squared() <= T::zero() {
                    continue;
                }
                rays.push(Ray {
                    origin_vertex: i as u32,
                    sensor,
                });
                emitted = true;
            }
            if !emitted {
                stats.skipped_points += 1;
            }
        }
    }
    stats.rays = rays.len();
    Ok((rays, stats))
}

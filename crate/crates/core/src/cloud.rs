//! Point-cloud and sensor data model.
//!
//! A [`PointCloud`] stores positions, an optional parallel normal array, a
//! per-point source tag (which acquisition the point came from) and a
//! per-point visibility list of sensor indices into a [`SensorSet`]. Normals
//! use the zero vector as the "invalid / degenerate fit" marker; consumers
//! treat such points as contributing `max{0, cos θ} = 0`.

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};
use crate::scalar::Real;

/// Which acquisition a point (or mesh vertex) originates from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceTag {
    Aerial,
    Street,
}

impl SourceTag {
    pub fn as_u8(self) -> u8 {
        match self {
            SourceTag::Aerial => 0,
            SourceTag::Street => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SourceTag::Aerial),
            1 => Some(SourceTag::Street),
            _ => None,
        }
    }
}

/// Ordered camera / scanner centers. Visibility lists index into this.
#[derive(Clone, Debug, Default)]
pub struct SensorSet<T> {
    pub positions: Vec<Point3<T>>,
}

impl<T: Real> SensorSet<T> {
    pub fn new(positions: Vec<Point3<T>>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Concatenates two sensor sets; visibility indices of the cloud attached
    /// to `other` must be shifted by `self.len()` (see
    /// [`PointCloud::offset_visibility`]).
    pub fn concat(&self, other: &SensorSet<T>) -> SensorSet<T> {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        SensorSet { positions }
    }
}

/// A line of sight from a point (by index) to the sensor that observed it.
///
/// Zero-length rays (sensor coincident with the point) are rejected where rays
/// are built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    /// Index of the originating point/vertex.
    pub origin_vertex: u32,
    /// Sensor position in world coordinates.
    pub sensor: Point3<T>,
}

/// Point cloud with per-point source tags and visibility.
#[derive(Clone, Debug, Default)]
pub struct PointCloud<T> {
    pub points: Vec<Point3<T>>,
    /// Unit normals, zero vector marking an invalid/degenerate estimate.
    pub normals: Option<Vec<Vector3<T>>>,
    pub source: Vec<SourceTag>,
    /// Per-point sensor indices (non-empty after ingestion).
    pub visibility: Vec<Vec<u32>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new() -> Self {
        Self {
            points: Vec::new(),
            normals: None,
            source: Vec::new(),
            visibility: Vec::new(),
        }
    }

    pub fn with_uniform_tag(
        points: Vec<Point3<T>>,
        visibility: Vec<Vec<u32>>,
        tag: SourceTag,
    ) -> Self {
        let n = points.len();
        Self {
            points,
            normals: None,
            source: vec![tag; n],
            visibility,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Normal of point `i` if present and valid (non-zero).
    pub fn valid_normal(&self, i: usize) -> Option<Vector3<T>> {
        self.normals.as_ref().and_then(|ns| {
            let n = ns[i];
            if n.norm_squared() > T::zero() {
                Some(n)
            } else {
                None
            }
        })
    }

    /// Checks the structural invariants: parallel array lengths, finite
    /// coordinates, unit-or-zero normals, non-empty in-range visibility.
    pub fn validate(&self, sensors: &SensorSet<T>) -> Result<()> {
        if self.source.len() != self.points.len() || self.visibility.len() != self.points.len() {
            return Err(Error::Internal(
                "point cloud parallel arrays differ in length".into(),
            ));
        }
        if let Some(ns) = &self.normals {
            if ns.len() != self.points.len() {
                return Err(Error::Internal(
                    "normal array length differs from point count".into(),
                ));
            }
            let tol = T::of(1e-6);
            for (i, n) in ns.iter().enumerate() {
                let len = n.norm();
                if len > T::zero() && (len - T::one()).abs() > tol {
                    return Err(Error::Internal(format!(
                        "normal {i} has length {len}, expected 1 within 1e-6"
                    )));
                }
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Degenerate(format!("point {i} has non-finite coordinates")));
            }
        }
        for (i, vis) in self.visibility.iter().enumerate() {
            if vis.is_empty() {
                return Err(Error::MissingVisibility { point: i });
            }
            for &s in vis {
                if s as usize >= sensors.len() {
                    return Err(Error::SensorIndexOutOfRange {
                        point: i,
                        index: s,
                        count: sensors.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Shifts every visibility index by `offset` (used when concatenating the
    /// sensor sets of two clouds into one).
    pub fn offset_visibility(&mut self, offset: u32) {
        for vis in &mut self.visibility {
            for s in vis.iter_mut() {
                *s += offset;
            }
        }
    }

    /// Appends all points of `other`, keeping tags, normals and visibility.
    /// Normals are kept only if both clouds have them.
    pub fn append(&mut self, other: &PointCloud<T>) {
        self.points.extend_from_slice(&other.points);
        self.source.extend_from_slice(&other.source);
        self.visibility.extend_from_slice(&other.visibility);
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
    }

    /// New cloud containing only the selected point indices.
    pub fn subset(&self, keep: &[usize]) -> PointCloud<T> {
        PointCloud {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| keep.iter().map(|&i| ns[i]).collect()),
            source: keep.iter().map(|&i| self.source[i]).collect(),
            visibility: keep.iter().map(|&i| self.visibility[i].clone()).collect(),
        }
    }

    /// Mean number of visibility entries per point.
    pub fn mean_visibility(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: usize = self.visibility.iter().map(Vec::len).sum();
        total as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cloud() -> (PointCloud<f64>, SensorSet<f64>) {
        let cloud = PointCloud::with_uniform_tag(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0], vec![0, 1], vec![1]],
            SourceTag::Aerial,
        );
        let sensors = SensorSet::new(vec![Point3::new(0.0, 0.0, 5.0), Point3::new(5.0, 0.0, 5.0)]);
        (cloud, sensors)
    }

    #[test]
    fn validate_accepts_well_formed_cloud() {
        let (cloud, sensors) = sample_cloud();
        cloud.validate(&sensors).unwrap();
    }

    #[test]
    fn validate_rejects_out_of_range_sensor() {
        let (mut cloud, sensors) = sample_cloud();
        cloud.visibility[1] = vec![7];
        let err = cloud.validate(&sensors).unwrap_err();
        assert!(matches!(
            err,
            Error::SensorIndexOutOfRange { point: 1, index: 7, count: 2 }
        ));
    }

    #[test]
    fn validate_rejects_empty_visibility() {
        let (mut cloud, sensors) = sample_cloud();
        cloud.visibility[2].clear();
        assert!(matches!(
            cloud.validate(&sensors).unwrap_err(),
            Error::MissingVisibility { point: 2 }
        ));
    }

    #[test]
    fn offset_visibility_shifts_all_indices() {
        let (mut cloud, _) = sample_cloud();
        cloud.offset_visibility(3);
        assert_eq!(cloud.visibility[1], vec![3, 4]);
    }

    #[test]
    fn append_merges_normals_only_when_both_present() {
        let (mut a, _) = sample_cloud();
        let (mut b, _) = sample_cloud();
        a.normals = Some(vec![Vector3::new(0.0, 0.0, 1.0); 3]);
        b.normals = Some(vec![Vector3::new(0.0, 0.0, 1.0); 3]);
        a.append(&b);
        assert_eq!(a.len(), 6);
        assert!(a.has_normals());

        let (mut c, _) = sample_cloud();
        c.normals = Some(vec![Vector3::new(0.0, 0.0, 1.0); 3]);
        let (d, _) = sample_cloud();
        c.append(&d);
        assert!(!c.has_normals());
    }
}

//! Normal estimation by total-least-squares plane fits over k-NN
//! neighborhoods, with visibility-based orientation.
//!
//! Each point's normal is the smallest-eigenvalue direction of its
//! neighborhood covariance (neighborhood includes the point itself), flipped
//! so it points toward the mean of the point's visible sensor positions.
//! Degenerate neighborhoods (collinear or coincident) yield the zero-vector
//! "invalid" marker; downstream consumers score such points as cos θ = 0.

use rayon::prelude::*;

use crate::cloud::{PointCloud, SensorSet};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};
use crate::knn::KdTree;
use crate::scalar::Real;

/// Symmetric 3x3 matrix in row-major packed form
/// `[m00, m01, m02, m11, m12, m22]`.
type Sym3<T> = [T; 6];

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending with matching unit eigenvectors.
pub fn eigen_sym3<T: Real>(m: Sym3<T>) -> ([T; 3], [Vector3<T>; 3]) {
    let mut a = [
        [m[0], m[1], m[2]],
        [m[1], m[3], m[4]],
        [m[2], m[4], m[5]],
    ];
    let mut v = [
        [T::one(), T::zero(), T::zero()],
        [T::zero(), T::one(), T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    for _sweep in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == T::zero() {
                continue;
            }
            let app = a[p][p];
            let aqq = a[q][q];
            let theta = (aqq - app) / (T::of(2.0) * apq);
            let t = if theta >= T::zero() {
                T::one() / (theta + (T::one() + theta * theta).sqrt())
            } else {
                -T::one() / (-theta + (T::one() + theta * theta).sqrt())
            };
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in &mut v {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut pairs: [(T, Vector3<T>); 3] = [
        (a[0][0], Vector3::new(v[0][0], v[1][0], v[2][0])),
        (a[1][1], Vector3::new(v[0][1], v[1][1], v[2][1])),
        (a[2][2], Vector3::new(v[0][2], v[1][2], v[2][2])),
    ];
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    (
        [pairs[0].0, pairs[1].0, pairs[2].0],
        [pairs[0].1, pairs[1].1, pairs[2].1],
    )
}

/// Covariance of a neighborhood around its centroid.
fn neighborhood_covariance<T: Real>(points: &[Point3<T>], idx: &[u32]) -> (Point3<T>, Sym3<T>) {
    let inv = T::one() / T::of(idx.len() as f64);
    let mut cx = T::zero();
    let mut cy = T::zero();
    let mut cz = T::zero();
    for &i in idx {
        let p = points[i as usize];
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    let centroid = Point3::new(cx * inv, cy * inv, cz * inv);
    let mut m = [T::zero(); 6];
    for &i in idx {
        let d = points[i as usize] - centroid;
        m[0] += d.x * d.x;
        m[1] += d.x * d.y;
        m[2] += d.x * d.z;
        m[3] += d.y * d.y;
        m[4] += d.y * d.z;
        m[5] += d.z * d.z;
    }
    for entry in &mut m {
        *entry = *entry * inv;
    }
    (centroid, m)
}

/// Returns a copy of the cloud with estimated normals.
///
/// The plane fit uses the k nearest neighbors of each point, the point itself
/// included. Requires at least `k + 1` points in the cloud.
pub fn estimate_normals<T: Real>(
    cloud: &PointCloud<T>,
    sensors: &SensorSet<T>,
    k: usize,
) -> Result<PointCloud<T>> {
    if k < 3 {
        return Err(Error::invalid_param("k", "need at least 3 neighbors for a plane fit"));
    }
    if cloud.len() < k + 1 {
        return Err(Error::invalid_param(
            "k",
            format!("cloud has {} points, need at least k + 1 = {}", cloud.len(), k + 1),
        ));
    }
    let tree = KdTree::build(cloud)?;
    let mut normals: Vec<Vector3<T>> = vec![Vector3::zero(); cloud.len()];

    normals
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, slot)| -> Result<()> {
            let p = cloud.points[i];
            let nbrs = tree.knn(p, k)?;
            let (_, cov) = neighborhood_covariance(&cloud.points, &nbrs);
            let (evals, evecs) = eigen_sym3(cov);
            // Collinear or coincident neighborhoods have no defined plane;
            // exact degeneracy shows up as a mid eigenvalue at rounding level.
            let degenerate =
                evals[2] <= T::zero() || evals[1] <= evals[2] * T::epsilon() * T::of(1000.0);
            if degenerate {
                *slot = Vector3::zero();
                return Ok(());
            }
            let mut n = match evecs[0].normalized() {
                Some(n) => n,
                None => {
                    *slot = Vector3::zero();
                    return Ok(());
                }
            };
            // Orient toward the mean of the visible sensor positions.
            let vis = &cloud.visibility[i];
            let mut mean = Vector3::zero();
            for &s in vis {
                mean += sensors.positions[s as usize].coords();
            }
            let mean = (mean / T::of(vis.len() as f64)).to_point();
            let toward = mean - p;
            if n.dot(toward) < T::zero() {
                n = -n;
            }
            *slot = n;
            Ok(())
        })?;

    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::SourceTag;

    fn plane_cloud(zs: impl Fn(f64, f64) -> f64) -> PointCloud<f64> {
        let mut points = Vec::new();
        for i in 0..5 {
            for j in 0..4 {
                let x = i as f64 * 0.3;
                let y = j as f64 * 0.3;
                points.push(Point3::new(x, y, zs(x, y)));
            }
        }
        let n = points.len();
        PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Aerial)
    }

    #[test]
    fn flat_plane_with_sensor_above() {
        let cloud = plane_cloud(|_, _| 0.0);
        let sensors = SensorSet::new(vec![Point3::new(0.0, 0.0, 10.0)]);
        let with_normals = estimate_normals(&cloud, &sensors, 10).unwrap();
        for n in with_normals.normals.unwrap() {
            assert!((n.x).abs() < 1e-12 && (n.y).abs() < 1e-12);
            assert!((n.z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_plane_with_sensor_below_flips() {
        let cloud = plane_cloud(|_, _| 0.0);
        let sensors = SensorSet::new(vec![Point3::new(0.0, 0.0, -10.0)]);
        let with_normals = estimate_normals(&cloud, &sensors, 10).unwrap();
        for n in with_normals.normals.unwrap() {
            assert!((n.z + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_neighborhood_is_flagged_invalid() {
        let points: Vec<_> = (0..12).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let n = points.len();
        let cloud = PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Street);
        let sensors = SensorSet::new(vec![Point3::new(0.0, 5.0, 0.0)]);
        let out = estimate_normals(&cloud, &sensors, 5).unwrap();
        for n in out.normals.unwrap() {
            assert_eq!(n, Vector3::zero());
        }
    }

    #[test]
    fn eigen_recovers_diagonal() {
        let (vals, vecs) = eigen_sym3::<f64>([3.0, 0.0, 0.0, 1.0, 0.0, 2.0]);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
        assert!(vecs[0].y.abs() > 0.99);
        assert!(vecs[2].x.abs() > 0.99);
    }
}

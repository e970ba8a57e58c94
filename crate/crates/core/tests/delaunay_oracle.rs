//! Randomized verification of the tetrahedralization against brute-force
//! oracles: empty circumspheres checked with exact predicates against every
//! vertex, and combinatorial face/adjacency consistency.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use tetfuse_core::cloud::{PointCloud, SourceTag};
use tetfuse_core::delaunay::{tetrahedralize, INFINITE};
use tetfuse_core::geometry::Point3;
use tetfuse_core::predicates::{insphere, orient3d};

fn random_ball_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud<f64> {
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.coords().norm() <= 1.0 {
            points.push(p);
        }
    }
    PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Aerial)
}

fn verify_delaunay(cloud: &PointCloud<f64>) {
    let dt = tetrahedralize(cloud).unwrap();
    // Every finite tet: positively oriented, circumsphere empty of all
    // vertices (strict containment is the violation; cospherical is fine).
    for t in 0..dt.num_tets() as u32 {
        let [a, b, c, d] = dt.tet_points(t);
        assert!(orient3d(a, b, c, d) > 0.0, "tet {t} not positively oriented");
        for v in 0..dt.num_vertices() as u32 {
            if dt.tet(t).contains(&v) {
                continue;
            }
            assert!(
                insphere(a, b, c, d, dt.vertex(v)) <= 0.0,
                "vertex {v} strictly inside circumsphere of tet {t}"
            );
        }
    }
    // Faces shared by exactly 2 tets internally, 1 on the hull; adjacency
    // symmetric and consistent with shared faces.
    let mut face_count: HashMap<[u32; 3], Vec<u32>> = HashMap::new();
    for t in 0..dt.num_tets() as u32 {
        for k in 0..4 {
            let mut face = dt.face_vertices(t, k);
            face.sort_unstable();
            face_count.entry(face).or_default().push(t);
            let nb = dt.tet_neighbors(t)[k];
            if nb == INFINITE {
                continue;
            }
            assert!(
                dt.tet_neighbors(nb).contains(&t),
                "adjacency not symmetric between {t} and {nb}"
            );
            // The shared face must consist of the common vertices.
            let common: Vec<u32> = dt
                .tet(t)
                .iter()
                .copied()
                .filter(|v| dt.tet(nb).contains(v))
                .collect();
            assert_eq!(common.len(), 3);
        }
    }
    for (face, tets) in &face_count {
        assert!(
            tets.len() == 1 || tets.len() == 2,
            "face {face:?} bordered by {} tets",
            tets.len()
        );
    }
    // Hull faces (count 1) must be INFINITE-adjacent on their tet.
    for t in 0..dt.num_tets() as u32 {
        for k in 0..4 {
            let mut face = dt.face_vertices(t, k);
            face.sort_unstable();
            let shared = face_count[&face].len();
            let nb = dt.tet_neighbors(t)[k];
            if shared == 1 {
                assert_eq!(nb, INFINITE);
            } else {
                assert_ne!(nb, INFINITE);
            }
        }
    }
}

#[test]
fn random_clouds_are_delaunay() {
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(20..140);
        let cloud = random_ball_cloud(&mut rng, n);
        verify_delaunay(&cloud);
    }
}

#[test]
fn gridlike_quantized_clouds_are_delaunay() {
    // Coordinates quantized to a coarse lattice produce many exactly
    // cospherical and coplanar configurations.
    for seed in 100..106u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 180;
        let points: Vec<Point3<f64>> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-4i32..=4) as f64 * 0.5,
                    rng.random_range(-4i32..=4) as f64 * 0.5,
                    rng.random_range(-4i32..=4) as f64 * 0.5,
                )
            })
            .collect();
        let cloud = PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Street);
        verify_delaunay(&cloud);
    }
}

#[test]
fn near_coplanar_clouds_are_delaunay() {
    for seed in 200..204u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let points: Vec<Point3<f64>> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1e-6..1e-6),
                )
            })
            .collect();
        let cloud = PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Aerial);
        verify_delaunay(&cloud);
    }
}

#[test]
fn duplicated_points_merge_with_union_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = random_ball_cloud(&mut rng, 50);
    let mut doubled = base.clone();
    doubled.append(&base);
    let dt = tetrahedralize(&doubled).unwrap();
    assert_eq!(dt.num_vertices(), 50);
    for i in 0..50 {
        assert_eq!(dt.vertex_of_point(i), dt.vertex_of_point(i + 50));
    }
}

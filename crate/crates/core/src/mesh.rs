//! Indexed triangle mesh with per-vertex source tags; the pipeline output and
//! the evaluation reference representation.

use std::collections::HashMap;

use crate::cloud::SourceTag;
use crate::geometry::{triangle_area, Point3, Vector3};
use crate::scalar::Real;

#[derive(Clone, Debug, Default)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Point3<T>>,
    pub tags: Vec<SourceTag>,
    /// Vertex index triples, consistently oriented.
    pub triangles: Vec<[u32; 3]>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_points(&self, t: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangle_points(t);
        triangle_area(a, b, c)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).fold(T::zero(), |acc, t| acc + self.triangle_area(t))
    }

    /// Geometric (non-unit) triangle normal following the winding order.
    pub fn triangle_normal(&self, t: usize) -> Vector3<T> {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(c - a)
    }

    /// Map from undirected edge to the triangles using it.
    pub fn edge_triangles(&self) -> HashMap<(u32, u32), Vec<u32>> {
        let mut edges: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push(t as u32);
            }
        }
        edges
    }

    /// Per-vertex 1-ring neighbor sets derived from triangle edges,
    /// deduplicated and sorted for deterministic iteration.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nbrs: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k] as usize;
                let b = tri[(k + 1) % 3];
                nbrs[a].push(b);
                nbrs[b as usize].push(tri[k]);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Drops vertices not referenced by any triangle, remapping indices.
    pub fn compact(&self) -> TriangleMesh<T> {
        let mut remap: Vec<u32> = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut tags = Vec::new();
        let mut triangles = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let mut mapped = [0u32; 3];
            for (slot, &v) in mapped.iter_mut().zip(tri.iter()) {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = vertices.len() as u32;
                    vertices.push(self.vertices[v as usize]);
                    tags.push(self.tags[v as usize]);
                }
                *slot = remap[v as usize];
            }
            triangles.push(mapped);
        }
        TriangleMesh {
            vertices,
            tags,
            triangles,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_map_counts_shared_edges() {
        let mesh = TriangleMesh::<f64> {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
            ],
            tags: vec![SourceTag::Aerial; 4],
            triangles: vec![[0, 1, 2], [1, 3, 2]],
        };
        let edges = mesh.edge_triangles();
        assert_eq!(edges[&(1, 2)].len(), 2);
        assert_eq!(edges[&(0, 1)].len(), 1);
        assert_eq!(mesh.vertex_neighbors()[1], vec![0, 2, 3]);
    }

    #[test]
    fn compact_drops_unused_vertices() {
        let mesh = TriangleMesh::<f64> {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(9.0, 9.0, 9.0), // unused
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            tags: vec![SourceTag::Aerial, SourceTag::Street, SourceTag::Street, SourceTag::Aerial],
            triangles: vec![[0, 2, 3]],
        };
        let compacted = mesh.compact();
        assert_eq!(compacted.num_vertices(), 3);
        assert_eq!(compacted.triangles, vec![[0, 1, 2]]);
        assert_eq!(compacted.tags, vec![SourceTag::Aerial, SourceTag::Street, SourceTag::Aerial]);
    }
}

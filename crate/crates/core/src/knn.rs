//! Exact k-nearest-neighbor queries over a point set.
//!
//! A balanced kd-tree with median splits. Results are exact (no
//! approximation) and deterministically ordered by `(distance, index)`, so
//! equidistant neighbors resolve to the lowest index. The tree is immutable
//! after construction and safe for concurrent queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};
use crate::scalar::Real;

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: u32,
        right: u32,
    },
}

/// Immutable spatial index over a copy of the input points.
#[derive(Clone, Debug)]
pub struct KdTree<T> {
    points: Vec<Point3<T>>,
    /// Point indices, permuted so each node owns a contiguous range.
    order: Vec<u32>,
    nodes: Vec<Node<T>>,
    root: u32,
}

/// Max-heap entry ordered by (distance², index); the worst candidate on top.
struct Candidate<T> {
    dist_sq: T,
    index: u32,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dist_sq == other.dist_sq && self.index == other.index
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Coordinates are validated finite, so total ordering is safe.
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap()
            .then(self.index.cmp(&other.index))
    }
}

impl<T: Real> KdTree<T> {
    /// Builds the index over a cloud's points.
    pub fn build(cloud: &PointCloud<T>) -> Result<Self> {
        Self::from_points(cloud.points.clone())
    }

    pub fn from_points(points: Vec<Point3<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = points.len();
        let root = build_node(&points, &mut order, 0, n, &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest point indices to `query`, ascending by distance with
    /// ties broken by lower index.
    pub fn knn(&self, query: Point3<T>, k: usize) -> Result<Vec<u32>> {
        Ok(self.knn_with_distances(query, k)?.into_iter().map(|(i, _)| i).collect())
    }

    /// As [`Self::knn`] but also returning squared distances.
    pub fn knn_with_distances(&self, query: Point3<T>, k: usize) -> Result<Vec<(u32, T)>> {
        if k > self.points.len() {
            return Err(Error::invalid_param(
                "k",
                format!("k = {k} exceeds cloud size {}", self.points.len()),
            ));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut results: Vec<(u32, T)> = heap
            .into_iter()
            .map(|c| (c.index, c.dist_sq))
            .collect();
        results.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(results)
    }

    /// Index of the single nearest point, or `None` for an empty tree.
    pub fn nearest(&self, query: Point3<T>) -> Option<(u32, T)> {
        self.knn_with_distances(query, 1).ok()?.into_iter().next()
    }

    fn search(&self, node: u32, query: Point3<T>, k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    let d = self.points[idx as usize].distance_squared(query);
                    let cand = Candidate {
                        dist_sq: d,
                        index: idx,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand.cmp(heap.peek().unwrap()) == Ordering::Less {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query.axis(*axis) - *value;
                let (near, far) = if delta <= T::zero() {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, k, heap);
                // Visit the far side only if the splitting plane is closer
                // than (or tied with) the current worst candidate.
                let must_visit = heap.len() < k
                    || delta * delta <= heap.peek().unwrap().dist_sq;
                if must_visit {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn build_node<T: Real>(
    points: &[Point3<T>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<T>>,
) -> u32 {
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return (nodes.len() - 1) as u32;
    }
    let bounds = Aabb::from_points(order[start..end].iter().map(|&i| points[i as usize]));
    let axis = bounds.widest_axis();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        let ka = points[a as usize].axis(axis);
        let kb = points[b as usize].axis(axis);
        ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
    });
    let value = points[order[mid] as usize].axis(axis);
    // Reserve a slot so children can be pushed after the parent.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let this = (nodes.len() - 1) as u32;
    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, mid, end, nodes);
    nodes[this as usize] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    this
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::SourceTag;

    fn cloud_from(points: Vec<Point3<f64>>) -> PointCloud<f64> {
        let n = points.len();
        PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Aerial)
    }

    #[test]
    fn hand_checkable_two_nearest() {
        let cloud = cloud_from(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ]);
        let tree = KdTree::build(&cloud).unwrap();
        let got = tree.knn(Point3::new(0.9, 0.0, 0.0), 2).unwrap();
        assert_eq!(got, vec![1, 0]);
    }

    #[test]
    fn k_equal_to_cloud_size_returns_all_sorted() {
        let cloud = cloud_from(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ]);
        let tree = KdTree::build(&cloud).unwrap();
        let got = tree.knn(Point3::new(0.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(got, vec![0, 2, 1]);
    }

    #[test]
    fn ties_break_by_lower_index() {
        let cloud = cloud_from(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ]);
        let tree = KdTree::build(&cloud).unwrap();
        let got = tree.knn(Point3::origin(), 2).unwrap();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let cloud = cloud_from(vec![]);
        assert!(matches!(KdTree::build(&cloud), Err(Error::EmptyCloud)));
    }

    #[test]
    fn k_larger_than_cloud_is_an_error() {
        let cloud = cloud_from(vec![Point3::origin()]);
        let tree = KdTree::build(&cloud).unwrap();
        assert!(tree.knn(Point3::origin(), 2).is_err());
    }
}

//! Incremental 3D Delaunay tetrahedralization and the ray-walking traversal
//! used to turn lines of sight into per-tetrahedron evidence.
//!
//! Construction is Bowyer–Watson with exact conflict predicates (adaptive
//! orientation/in-sphere tests, plus an exact rational in-circle test for
//! points landing on a hull face plane). Strict conflict tests double as the
//! deterministic resolution of cospherical inputs: points on a circumsphere
//! never enter the conflict region, so degenerate configurations produce a
//! valid (weakly) Delaunay triangulation without symbolic perturbation, and
//! cavity boundary faces are never coplanar with the inserted point.
//!
//! The convex hull is bounded by one conceptual infinite region; hull facets
//! connect to cells holding an `INFINITE` vertex during construction and are
//! reported as `INFINITE` neighbors afterwards.
//!
//! The walk reports, for a ray, every tetrahedron pierced between the origin
//! vertex and the target, with the distance from the origin to where the ray
//! exits each tetrahedron. Exit faces are chosen by smallest intersection
//! parameter with deterministic tie-breaking (lowest face index), which is
//! this module's documented perturbation rule for grazing rays.

use std::collections::HashMap;

use crate::cloud::{PointCloud, SourceTag};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::predicates::{coplanar_incircle, insphere, orient3d};
use crate::scalar::Real;

/// Sentinel for the infinite region (as a vertex id during construction and
/// as a neighbor id in the final structure).
pub const INFINITE: u32 = u32::MAX;

/// `FACE[k]` lists the local vertex indices of the face opposite local vertex
/// `k`, ordered so that `orient3d(face, v[k]) > 0` for a positively oriented
/// cell (the face normal points inward, toward the opposite vertex).
const FACE: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

/// One step of a traversal: the tetrahedron crossed (or [`INFINITE`]) and the
/// distance from the ray origin to where the ray exits it, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraversalStep<T> {
    pub tet: u32,
    pub exit_distance: T,
}

/// Walk orientation: along the ray toward the sensor, or the inverted ray
/// behind the origin vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkDirection {
    TowardSensor,
    Inverted,
}

/// A 3D Delaunay tetrahedralization of a point cloud.
///
/// Vertices carry the source tags of their originating points; exact
/// duplicate points are merged (visibility stays with the per-point rays).
/// `neighbors[t][k]` is the tet across the face opposite `tets[t][k]`, or
/// [`INFINITE`] for hull facets. All tets are positively oriented.
#[derive(Clone, Debug)]
pub struct Tetrahedralization<T> {
    verts: Vec<Point3<T>>,
    tags: Vec<SourceTag>,
    point_vertex: Vec<u32>,
    tets: Vec<[u32; 4]>,
    neighbors: Vec<[u32; 4]>,
    vert_tet: Vec<u32>,
}

impl<T: Real> Tetrahedralization<T> {
    pub fn num_vertices(&self) -> usize {
        self.verts.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn vertex(&self, v: u32) -> Point3<T> {
        self.verts[v as usize]
    }

    pub fn vertex_tag(&self, v: u32) -> SourceTag {
        self.tags[v as usize]
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.verts
    }

    pub fn vertex_tags(&self) -> &[SourceTag] {
        &self.tags
    }

    /// DT vertex for an input point index (duplicates map to one vertex).
    pub fn vertex_of_point(&self, point: usize) -> u32 {
        self.point_vertex[point]
    }

    pub fn tet(&self, t: u32) -> [u32; 4] {
        self.tets[t as usize]
    }

    pub fn tet_neighbors(&self, t: u32) -> [u32; 4] {
        self.neighbors[t as usize]
    }

    /// Any finite tet incident to the vertex.
    pub fn incident_tet(&self, v: u32) -> u32 {
        self.vert_tet[v as usize]
    }

    pub fn is_hull_tet(&self, t: u32) -> bool {
        self.neighbors[t as usize].iter().any(|&n| n == INFINITE)
    }

    pub fn tet_points(&self, t: u32) -> [Point3<T>; 4] {
        let v = self.tets[t as usize];
        [
            self.verts[v[0] as usize],
            self.verts[v[1] as usize],
            self.verts[v[2] as usize],
            self.verts[v[3] as usize],
        ]
    }

    /// Vertex ids of the face of `t` opposite local index `k`, ordered with
    /// the normal pointing into `t`.
    pub fn face_vertices(&self, t: u32, k: usize) -> [u32; 3] {
        let v = self.tets[t as usize];
        [v[FACE[k][0]], v[FACE[k][1]], v[FACE[k][2]]]
    }

    /// Calls `f(t, neighbor, face)` once per internal face (`t < neighbor`).
    pub fn for_each_internal_face<F: FnMut(u32, u32, [u32; 3])>(&self, mut f: F) {
        for t in 0..self.tets.len() as u32 {
            for k in 0..4 {
                let n = self.neighbors[t as usize][k];
                if n != INFINITE && t < n {
                    f(t, n, self.face_vertices(t, k));
                }
            }
        }
    }

    /// All finite tets incident to vertex `v`, ascending ids.
    pub fn incident_tets(&self, v: u32) -> Vec<u32> {
        let mut found = Vec::new();
        let mut stack = vec![self.vert_tet[v as usize]];
        while let Some(t) = stack.pop() {
            if found.contains(&t) || !self.tets[t as usize].contains(&v) {
                continue;
            }
            found.push(t);
            for &n in &self.neighbors[t as usize] {
                if n != INFINITE && !found.contains(&n) && self.tets[n as usize].contains(&v) {
                    stack.push(n);
                }
            }
        }
        found.sort_unstable();
        found
    }

    /// Debug dump: `nv nt` header, `v x y z` lines, `t a b c d` lines.
    pub fn dump_ascii(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.verts.len(), self.tets.len());
        for p in &self.verts {
            let p = p.to_f64();
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for t in &self.tets {
            let _ = writeln!(out, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Walks from a DT vertex toward (or away from) a sensor position.
    ///
    /// Steps end at whichever comes first: the tet containing the target, an
    /// exit into the infinite region (recorded as a terminal [`INFINITE`]
    /// step), or cumulative distance reaching `max_distance`. The final tet
    /// containing the target reports `exit_distance = |v - target|`.
    pub fn walk(
        &self,
        origin_vertex: u32,
        sensor: Point3<T>,
        direction: WalkDirection,
        max_distance: T,
    ) -> Result<Vec<TraversalStep<T>>> {
        if origin_vertex as usize >= self.verts.len() {
            return Err(Error::RayOriginNotVertex {
                vertex: origin_vertex as usize,
            });
        }
        if !(max_distance > T::zero()) {
            return Err(Error::invalid_param(
                "max_distance",
                "must be positive (or infinite)",
            ));
        }
        let v = self.verts[origin_vertex as usize];
        let sensor_dist = (sensor - v).norm();
        if !(sensor_dist > T::zero()) {
            return Err(Error::invalid_param("ray", "sensor coincides with origin vertex"));
        }
        // Target point defining the walk segment. Inverted walks mirror the
        // sensor behind the vertex, long enough that the distance bound (when
        // finite) always fires first.
        let target = match direction {
            WalkDirection::TowardSensor => sensor,
            WalkDirection::Inverted => {
                let unit = (v - sensor) / sensor_dist;
                let len = if max_distance.is_finite() {
                    max_distance * T::of(2.0)
                } else {
                    sensor_dist
                };
                v + unit * len
            }
        };

        let start = match self.entry_tet(origin_vertex, target) {
            Some(t) => t,
            None => {
                // Direction leaves the hull immediately at a hull vertex.
                return Ok(vec![TraversalStep {
                    tet: INFINITE,
                    exit_distance: T::zero(),
                }]);
            }
        };

        let o = v.to_f64();
        let q = target.to_f64();
        let dir = q - o;
        let seg_len = dir.norm();
        let mut steps = Vec::new();
        let mut cur = start;
        let mut entry: usize = usize::MAX;
        let mut prev_tau = 0.0f64;
        let cap = 4 * self.tets.len() + 16;
        for _ in 0..cap {
            match self.select_exit(cur, entry, o, dir, prev_tau) {
                Some((k, tau)) if tau < 1.0 => {
                    let d_exit = {
                        let d = T::of(tau * seg_len);
                        match steps.last() {
                            Some(&TraversalStep { exit_distance, .. }) if d < exit_distance => {
                                exit_distance
                            }
                            _ => d,
                        }
                    };
                    steps.push(TraversalStep {
                        tet: cur,
                        exit_distance: d_exit,
                    });
                    if d_exit >= max_distance {
                        break;
                    }
                    let nb = self.neighbors[cur as usize][k];
                    if nb == INFINITE {
                        steps.push(TraversalStep {
                            tet: INFINITE,
                            exit_distance: d_exit,
                        });
                        break;
                    }
                    entry = self.neighbors[nb as usize]
                        .iter()
                        .position(|&b| b == cur)
                        .ok_or_else(|| Error::Internal("asymmetric adjacency".into()))?;
                    prev_tau = tau;
                    cur = nb;
                }
                _ => {
                    // Target lies inside the current tet.
                    steps.push(TraversalStep {
                        tet: cur,
                        exit_distance: T::of(seg_len),
                    });
                    break;
                }
            }
        }
        Ok(steps)
    }

    /// Convenience for rays whose `origin_vertex` indexes the original cloud.
    pub fn walk_ray(
        &self,
        ray: &crate::cloud::Ray<T>,
        direction: WalkDirection,
        max_distance: T,
    ) -> Result<Vec<TraversalStep<T>>> {
        let point = ray.origin_vertex as usize;
        if point >= self.point_vertex.len() {
            return Err(Error::RayOriginNotVertex { vertex: point });
        }
        self.walk(self.point_vertex[point], ray.sensor, direction, max_distance)
    }

    /// Finds the incident tet whose cone at `vertex` contains the direction
    /// toward `target`, by exact orientation tests; grazing ties resolve to
    /// the lowest tet id.
    fn entry_tet(&self, vertex: u32, target: Point3<T>) -> Option<u32> {
        let v = self.verts[vertex as usize];
        for t in self.incident_tets(vertex) {
            let verts = self.tets[t as usize];
            let i = verts.iter().position(|&w| w == vertex).unwrap();
            let [x, y, z] = self.face_vertices(t, i);
            // (x, y, z) satisfies orient3d(x,y,z,v) > 0; (v, x, z, y) is then
            // positively oriented, giving the cone test its face order.
            let a = self.verts[x as usize];
            let b = self.verts[z as usize];
            let c = self.verts[y as usize];
            if orient3d(v, a, b, target) >= 0.0
                && orient3d(v, b, c, target) >= 0.0
                && orient3d(v, c, a, target) >= 0.0
            {
                return Some(t);
            }
        }
        None
    }

    /// Chooses the exit face of `cur` for the segment, excluding the entry
    /// face: smallest intersection parameter not behind the entry point, ties
    /// to the lowest face index.
    fn select_exit(
        &self,
        cur: u32,
        entry: usize,
        o: Point3<f64>,
        dir: crate::geometry::Vector3<f64>,
        prev_tau: f64,
    ) -> Option<(usize, f64)> {
        let verts = self.tets[cur as usize];
        let mut best: Option<(usize, f64)> = None;
        let tol = 1e-12 * (1.0 + prev_tau.abs());
        for k in 0..4 {
            if k == entry {
                continue;
            }
            let [xi, yi, zi] = FACE[k];
            let x = self.verts[verts[xi] as usize].to_f64();
            let y = self.verts[verts[yi] as usize].to_f64();
            let z = self.verts[verts[zi] as usize].to_f64();
            // Inward-pointing normal; the segment exits where it runs
            // against it.
            let n = (y - x).cross(z - x);
            let denom = dir.dot(n);
            if denom >= 0.0 {
                continue;
            }
            let tau = (x - o).dot(n) / denom;
            if !tau.is_finite() || tau < prev_tau - tol {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bt)) => tau < bt,
            };
            if better {
                best = Some((k, tau));
            }
        }
        best
    }
}

/// Rough memory estimate for building a tetrahedralization of `n` points,
/// used by the CLI's pre-construction budget check.
pub fn estimate_build_bytes(n_points: usize) -> u64 {
    // ~7 cells per point during construction (finite + infinite + slack), a
    // 32-byte cell plus stamps, plus vertex storage.
    (n_points as u64) * 7 * 48 + (n_points as u64) * 64
}

/// Builds the Delaunay tetrahedralization of the cloud.
///
/// Exact duplicate points are merged (tags: street wins). Fails with a
/// degenerate-input error when all points are coplanar.
pub fn tetrahedralize<T: Real>(cloud: &PointCloud<T>) -> Result<Tetrahedralization<T>> {
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Degenerate(format!("point {i} has non-finite coordinates")));
        }
    }
    // Merge exact duplicates (normalizing -0.0) and carry tags.
    let mut unique: Vec<Point3<T>> = Vec::new();
    let mut tags: Vec<SourceTag> = Vec::new();
    let mut point_vertex: Vec<u32> = Vec::with_capacity(cloud.len());
    let mut seen: HashMap<(u64, u64, u64), u32> = HashMap::new();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let key = (
            (p.x.to_double() + 0.0).to_bits(),
            (p.y.to_double() + 0.0).to_bits(),
            (p.z.to_double() + 0.0).to_bits(),
        );
        match seen.get(&key) {
            Some(&v) => {
                point_vertex.push(v);
                if cloud.source[i] == SourceTag::Street {
                    tags[v as usize] = SourceTag::Street;
                }
            }
            None => {
                let v = unique.len() as u32;
                seen.insert(key, v);
                unique.push(p);
                tags.push(cloud.source[i]);
                point_vertex.push(v);
            }
        }
    }
    if unique.len() < 4 {
        return Err(Error::Degenerate("no 3D hull".into()));
    }

    let order = morton_order(&unique);
    let mut builder = Builder::new(unique, tags);
    builder.init_first_cells(&order)?;
    for &v in &order {
        if builder.inserted[v as usize] {
            continue;
        }
        builder.insert(v)?;
    }
    builder.finalize(point_vertex)
}

/// Deterministic spatial insertion order (Morton code over the bounding box).
fn morton_order<T: Real>(points: &[Point3<T>]) -> Vec<u32> {
    let bounds = crate::geometry::Aabb::from_points(points.iter().copied());
    let min = bounds.min.to_f64();
    let max = bounds.max.to_f64();
    let scale = |lo: f64, hi: f64| if hi > lo { 2097151.0 / (hi - lo) } else { 0.0 };
    let sx = scale(min.x, max.x);
    let sy = scale(min.y, max.y);
    let sz = scale(min.z, max.z);
    let mut keyed: Vec<(u64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let p = p.to_f64();
            let ix = ((p.x - min.x) * sx) as u64;
            let iy = ((p.y - min.y) * sy) as u64;
            let iz = ((p.z - min.z) * sz) as u64;
            (
                interleave3(ix) | interleave3(iy) << 1 | interleave3(iz) << 2,
                i as u32,
            )
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Spreads the low 21 bits of `v` so consecutive bits land 3 apart.
fn interleave3(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | (x << 32)) & 0x1f00000000ffff;
    x = (x | (x << 16)) & 0x1f0000ff0000ff;
    x = (x | (x << 8)) & 0x100f00f00f00f00f;
    x = (x | (x << 4)) & 0x10c30c30c30c30c3;
    x = (x | (x << 2)) & 0x1249249249249249;
    x
}

#[derive(Clone, Debug)]
struct Cell {
    v: [u32; 4],
    n: [u32; 4],
}

struct Builder<T> {
    points: Vec<Point3<T>>,
    tags: Vec<SourceTag>,
    cells: Vec<Cell>,
    alive: Vec<bool>,
    free: Vec<u32>,
    vert_cell: Vec<u32>,
    inserted: Vec<bool>,
    conflict_stamp: Vec<u64>,
    conflict_value: Vec<bool>,
    visited_stamp: Vec<u64>,
    epoch: u64,
    hint: u32,
    locate_rng: u64,
}

impl<T: Real> Builder<T> {
    fn new(points: Vec<Point3<T>>, tags: Vec<SourceTag>) -> Self {
        let n = points.len();
        Self {
            points,
            tags,
            cells: Vec::new(),
            alive: Vec::new(),
            free: Vec::new(),
            vert_cell: vec![INFINITE; n],
            inserted: vec![false; n],
            conflict_stamp: Vec::new(),
            conflict_value: Vec::new(),
            visited_stamp: Vec::new(),
            epoch: 0,
            hint: 0,
            locate_rng: 0x9e3779b97f4a7c15,
        }
    }

    fn pt(&self, v: u32) -> Point3<T> {
        self.points[v as usize]
    }

    fn alloc_cell(&mut self, v: [u32; 4]) -> u32 {
        let cell = Cell { v, n: [INFINITE; 4] };
        match self.free.pop() {
            Some(id) => {
                self.cells[id as usize] = cell;
                self.alive[id as usize] = true;
                id
            }
            None => {
                self.cells.push(cell);
                self.alive.push(true);
                self.conflict_stamp.push(0);
                self.conflict_value.push(false);
                self.visited_stamp.push(0);
                (self.cells.len() - 1) as u32
            }
        }
    }

    fn inf_index(&self, c: u32) -> Option<usize> {
        self.cells[c as usize].v.iter().position(|&v| v == INFINITE)
    }

    /// Positively orients a finite cell in place (swapping locals 0/1).
    fn orient_finite(&mut self, c: u32) -> Result<()> {
        let cell = &self.cells[c as usize];
        let s = orient3d(
            self.pt(cell.v[0]),
            self.pt(cell.v[1]),
            self.pt(cell.v[2]),
            self.pt(cell.v[3]),
        );
        if s == 0.0 {
            return Err(Error::Internal("flat finite cell created".into()));
        }
        if s < 0.0 {
            let cell = &mut self.cells[c as usize];
            cell.v.swap(0, 1);
            cell.n.swap(0, 1);
        }
        Ok(())
    }

    /// Orients an infinite cell so its finite face points toward the interior
    /// (the opposite vertex of its finite neighbor).
    fn orient_infinite(&mut self, c: u32) -> Result<()> {
        let k = self
            .inf_index(c)
            .ok_or_else(|| Error::Internal("orient_infinite on finite cell".into()))?;
        let cell = &self.cells[c as usize];
        let face = [cell.v[FACE[k][0]], cell.v[FACE[k][1]], cell.v[FACE[k][2]]];
        let nb = cell.n[k];
        if nb == INFINITE {
            return Err(Error::Internal("infinite cell without finite neighbor".into()));
        }
        let nb_cell = &self.cells[nb as usize];
        let q = *nb_cell
            .v
            .iter()
            .find(|&&w| !face.contains(&w))
            .ok_or_else(|| Error::Internal("neighbor shares all face vertices".into()))?;
        if q == INFINITE {
            return Err(Error::Internal("hull face borders two infinite cells".into()));
        }
        let s = orient3d(self.pt(face[0]), self.pt(face[1]), self.pt(face[2]), self.pt(q));
        if s == 0.0 {
            return Err(Error::Internal("flat cell behind hull face".into()));
        }
        if s < 0.0 {
            let (a, b) = (FACE[k][0], FACE[k][1]);
            let cell = &mut self.cells[c as usize];
            cell.v.swap(a, b);
            cell.n.swap(a, b);
        }
        Ok(())
    }

    /// Strict conflict test: `p` inside the circumsphere (finite cells) or
    /// strictly beyond the hull face / coplanar-in-circumcircle (infinite).
    fn conflict(&mut self, c: u32, p: Point3<T>) -> bool {
        if self.conflict_stamp[c as usize] == self.epoch {
            return self.conflict_value[c as usize];
        }
        let result = match self.inf_index(c) {
            None => {
                let cell = &self.cells[c as usize];
                insphere(
                    self.pt(cell.v[0]),
                    self.pt(cell.v[1]),
                    self.pt(cell.v[2]),
                    self.pt(cell.v[3]),
                    p,
                ) > 0.0
            }
            Some(k) => {
                let cell = &self.cells[c as usize];
                let face = [cell.v[FACE[k][0]], cell.v[FACE[k][1]], cell.v[FACE[k][2]]];
                let (a, b, c3) = (self.pt(face[0]), self.pt(face[1]), self.pt(face[2]));
                let s = orient3d(a, b, c3, p);
                if s < 0.0 {
                    true
                } else if s > 0.0 {
                    false
                } else {
                    coplanar_incircle(a, b, c3, p) > 0
                }
            }
        };
        self.conflict_stamp[c as usize] = self.epoch;
        self.conflict_value[c as usize] = result;
        result
    }

    /// Builds the initial complex: one finite tet over four affinely
    /// independent points plus four infinite cells on its faces.
    fn init_first_cells(&mut self, order: &[u32]) -> Result<()> {
        let v0 = order[0];
        let v1 = order[1];
        let p0 = self.pt(v0);
        let p1 = self.pt(v1);
        // Exact collinearity via 2D orientation on all coordinate planes.
        let collinear = |a: Point3<T>, b: Point3<T>, c: Point3<T>| -> bool {
            let proj = |p: Point3<T>, drop: usize| {
                let p = p.to_f64();
                match drop {
                    0 => robust::Coord { x: p.y, y: p.z },
                    1 => robust::Coord { x: p.x, y: p.z },
                    _ => robust::Coord { x: p.x, y: p.y },
                }
            };
            (0..3).all(|d| robust::orient2d(proj(a, d), proj(b, d), proj(c, d)) == 0.0)
        };
        let v2 = order[2..]
            .iter()
            .copied()
            .find(|&v| !collinear(p0, p1, self.pt(v)))
            .ok_or_else(|| Error::Degenerate("no 3D hull".into()))?;
        let p2 = self.pt(v2);
        let v3 = order[2..]
            .iter()
            .copied()
            .find(|&v| v != v2 && orient3d(p0, p1, p2, self.pt(v)) != 0.0)
            .ok_or_else(|| Error::Degenerate("no 3D hull".into()))?;

        let t0 = self.alloc_cell([v0, v1, v2, v3]);
        self.orient_finite(t0)?;
        let mut created = vec![t0];
        for k in 0..4 {
            let cell = self.cells[t0 as usize].clone();
            let face = [cell.v[FACE[k][0]], cell.v[FACE[k][1]], cell.v[FACE[k][2]]];
            let inf = self.alloc_cell([face[0], face[1], face[2], INFINITE]);
            created.push(inf);
        }
        self.stitch(&created)?;
        for &c in created[1..].iter() {
            self.orient_infinite(c)?;
        }
        for &c in &created {
            self.update_hints(c);
        }
        for &v in &[v0, v1, v2, v3] {
            self.inserted[v as usize] = true;
        }
        self.hint = t0;
        Ok(())
    }

    /// Mutually links all unlinked faces among `cells` by matching sorted
    /// vertex triples. Pre-existing links (to outside cells) are kept.
    fn stitch(&mut self, created: &[u32]) -> Result<()> {
        let mut open: HashMap<[u32; 3], (u32, usize)> = HashMap::new();
        for &c in created {
            for k in 0..4 {
                if self.cells[c as usize].n[k] != INFINITE {
                    continue;
                }
                let cell = &self.cells[c as usize];
                let mut key = [cell.v[FACE[k][0]], cell.v[FACE[k][1]], cell.v[FACE[k][2]]];
                key.sort_unstable();
                match open.remove(&key) {
                    Some((other, ko)) => {
                        self.cells[c as usize].n[k] = other;
                        self.cells[other as usize].n[ko] = c;
                    }
                    None => {
                        open.insert(key, (c, k));
                    }
                }
            }
        }
        if !open.is_empty() {
            return Err(Error::Internal("unmatched faces while stitching".into()));
        }
        Ok(())
    }

    fn update_hints(&mut self, c: u32) {
        for &v in &self.cells[c as usize].v {
            if v != INFINITE {
                self.vert_cell[v as usize] = c;
            }
        }
    }

    /// Visibility walk to a cell in conflict with `p`, with a deterministic
    /// pseudo-random face order and an exhaustive fallback.
    fn locate_conflict(&mut self, p: Point3<T>) -> Result<u32> {
        let mut cur = if (self.hint as usize) < self.cells.len() && self.alive[self.hint as usize]
        {
            self.hint
        } else {
            self.first_alive()?
        };
        let cap = 4 * self.cells.len() + 64;
        for _ in 0..cap {
            match self.inf_index(cur) {
                Some(k) => {
                    if self.conflict(cur, p) {
                        return Ok(cur);
                    }
                    // Not outside this hull face: retreat into the hull.
                    cur = self.cells[cur as usize].n[k];
                    if cur == INFINITE {
                        return Err(Error::Internal("dangling hull adjacency".into()));
                    }
                }
                None => {
                    self.locate_rng = self
                        .locate_rng
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let rot = (self.locate_rng >> 33) as usize;
                    let mut moved = false;
                    for j in 0..4 {
                        let k = (j + rot) & 3;
                        let cell = &self.cells[cur as usize];
                        let face = [cell.v[FACE[k][0]], cell.v[FACE[k][1]], cell.v[FACE[k][2]]];
                        let s =
                            orient3d(self.pt(face[0]), self.pt(face[1]), self.pt(face[2]), p);
                        if s < 0.0 {
                            cur = self.cells[cur as usize].n[k];
                            moved = true;
                            break;
                        }
                    }
                    if !moved {
                        // p is inside the closure of this finite cell.
                        return Ok(cur);
                    }
                }
            }
        }
        // Degenerate wandering: scan every live cell for a conflict.
        for c in 0..self.cells.len() as u32 {
            if self.alive[c as usize] && self.conflict(c, p) {
                return Ok(c);
            }
        }
        Err(Error::Internal(
            "no conflict cell found; duplicate point slipped through dedup".into(),
        ))
    }

    fn first_alive(&self) -> Result<u32> {
        (0..self.cells.len() as u32)
            .find(|&c| self.alive[c as usize])
            .ok_or_else(|| Error::Internal("no live cells".into()))
    }

    fn insert(&mut self, vertex: u32) -> Result<()> {
        let p = self.pt(vertex);
        self.epoch += 1;
        let seed = self.locate_conflict(p)?;
        if !self.conflict(seed, p) {
            return Err(Error::Internal("locate returned a non-conflict cell".into()));
        }

        // Flood the conflict region; record boundary faces.
        let mut region: Vec<u32> = Vec::new();
        let mut boundary: Vec<(u32, usize, u32, usize)> = Vec::new();
        let mut stack = vec![seed];
        self.visited_stamp[seed as usize] = self.epoch;
        while let Some(c) = stack.pop() {
            region.push(c);
            for k in 0..4 {
                let nb = self.cells[c as usize].n[k];
                if nb == INFINITE {
                    return Err(Error::Internal("unstitched face in conflict flood".into()));
                }
                if self.visited_stamp[nb as usize] == self.epoch {
                    continue; // already part of the region
                }
                if self.conflict(nb, p) {
                    self.visited_stamp[nb as usize] = self.epoch;
                    stack.push(nb);
                } else {
                    let k_out = self.cells[nb as usize]
                        .n
                        .iter()
                        .position(|&b| b == c)
                        .ok_or_else(|| Error::Internal("asymmetric adjacency".into()))?;
                    boundary.push((c, k, nb, k_out));
                }
            }
        }

        // Star: one new cell per boundary face, then stitch the open faces.
        let mut created = Vec::with_capacity(boundary.len());
        for &(inside, k_in, outside, k_out) in &boundary {
            let cell = &self.cells[inside as usize];
            let face = [
                cell.v[FACE[k_in][0]],
                cell.v[FACE[k_in][1]],
                cell.v[FACE[k_in][2]],
            ];
            let new_cell = self.alloc_cell([face[0], face[1], face[2], vertex]);
            // The base face (opposite the new vertex at local 3) borders the
            // old outside cell.
            self.cells[new_cell as usize].n[3] = outside;
            self.cells[outside as usize].n[k_out] = new_cell;
            created.push(new_cell);
        }
        for &c in &region {
            self.alive[c as usize] = false;
            self.free.push(c);
        }
        self.stitch(&created)?;
        for &c in &created {
            if self.inf_index(c).is_none() {
                self.orient_finite(c)?;
            } else {
                self.orient_infinite(c)?;
            }
            self.update_hints(c);
        }
        self.inserted[vertex as usize] = true;
        self.hint = *created.last().unwrap();
        Ok(())
    }

    fn finalize(self, point_vertex: Vec<u32>) -> Result<Tetrahedralization<T>> {
        let mut remap: Vec<u32> = vec![INFINITE; self.cells.len()];
        let mut tets = Vec::new();
        for c in 0..self.cells.len() {
            if self.alive[c] && !self.cells[c].v.contains(&INFINITE) {
                remap[c] = tets.len() as u32;
                tets.push(self.cells[c].v);
            }
        }
        let mut neighbors = Vec::with_capacity(tets.len());
        for c in 0..self.cells.len() {
            if remap[c] == INFINITE {
                continue;
            }
            let mut ns = [INFINITE; 4];
            for k in 0..4 {
                let nb = self.cells[c].n[k];
                ns[k] = if nb == INFINITE {
                    INFINITE
                } else {
                    remap[nb as usize]
                };
            }
            neighbors.push(ns);
        }
        let mut vert_tet = vec![INFINITE; self.points.len()];
        for (t, verts) in tets.iter().enumerate() {
            for &v in verts {
                vert_tet[v as usize] = t as u32;
            }
        }
        if vert_tet.iter().any(|&t| t == INFINITE) {
            return Err(Error::Internal("vertex with no finite incident tet".into()));
        }
        Ok(Tetrahedralization {
            verts: self.points,
            tags: self.tags,
            point_vertex,
            tets,
            neighbors,
            vert_tet,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;

    fn cloud_of(points: Vec<Point3<f64>>) -> PointCloud<f64> {
        let n = points.len();
        PointCloud::with_uniform_tag(points, vec![vec![0]; n], SourceTag::Aerial)
    }

    fn unit_tet_with_centroid() -> PointCloud<f64> {
        cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(0.0, 4.0, 0.0),
            Point3::new(0.0, 0.0, 4.0),
            Point3::new(1.0, 1.0, 1.0),
        ])
    }

    #[test]
    fn tet_plus_centroid_gives_four_tets() {
        let dt = tetrahedralize(&unit_tet_with_centroid()).unwrap();
        assert_eq!(dt.num_vertices(), 5);
        assert_eq!(dt.num_tets(), 4);
        let centroid = dt.vertex_of_point(4);
        for t in 0..dt.num_tets() as u32 {
            assert!(dt.tet(t).contains(&centroid));
        }
    }

    #[test]
    fn cube_corners_have_empty_circumspheres() {
        let mut pts = Vec::new();
        for z in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for x in [0.0, 1.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let dt = tetrahedralize(&cloud_of(pts)).unwrap();
        assert!(dt.num_tets() >= 5);
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
    }

    #[test]
    fn coplanar_input_is_rejected() {
        let pts = (0..10)
            .map(|i| Point3::new(i as f64, (i * i) as f64, 0.0))
            .collect();
        match tetrahedralize(&cloud_of(pts)) {
            Err(Error::Degenerate(msg)) => assert_eq!(msg, "no 3D hull"),
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_merge_to_one_vertex() {
        let cloud = cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 0.0),
        ]);
        let dt = tetrahedralize(&cloud).unwrap();
        assert_eq!(dt.num_vertices(), 4);
        assert_eq!(dt.vertex_of_point(0), dt.vertex_of_point(4));
    }

    #[test]
    fn adjacency_is_symmetric_and_faces_shared_by_two() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.1),
            Point3::new(0.0, 2.0, -0.05),
            Point3::new(0.3, 0.4, 1.7),
            Point3::new(1.1, 1.2, 0.9),
            Point3::new(0.2, 1.1, 0.4),
            Point3::new(1.5, 0.3, 1.2),
        ];
        let dt = tetrahedralize(&cloud_of(pts)).unwrap();
        let mut face_count: HashMap<[u32; 3], usize> = HashMap::new();
        for t in 0..dt.num_tets() as u32 {
            for k in 0..4 {
                let nb = dt.tet_neighbors(t)[k];
                let mut face = dt.face_vertices(t, k);
                face.sort_unstable();
                *face_count.entry(face).or_default() += 1;
                if nb != INFINITE {
                    assert!(dt.tet_neighbors(nb).contains(&t), "asymmetric adjacency");
                }
            }
        }
        for (&face, &count) in &face_count {
            assert!(count == 1 || count == 2, "face {face:?} appears {count} times");
        }
    }

    #[test]
    fn walk_from_centroid_crosses_one_tet_then_exits() {
        let dt = tetrahedralize(&unit_tet_with_centroid()).unwrap();
        let centroid = dt.vertex_of_point(4);
        let steps = dt
            .walk(
                centroid,
                Point3::new(10.0, 10.0, 10.0),
                WalkDirection::TowardSensor,
                f64::INFINITY,
            )
            .unwrap();
        assert_eq!(steps.len(), 2);
        assert_ne!(steps[0].tet, INFINITE);
        assert_eq!(steps[1].tet, INFINITE);
        assert!(steps[0].exit_distance > 0.0);
        assert_eq!(steps[0].exit_distance, steps[1].exit_distance);
    }

    #[test]
    fn walk_truncates_after_first_tet_for_tiny_max_distance() {
        let dt = tetrahedralize(&unit_tet_with_centroid()).unwrap();
        let centroid = dt.vertex_of_point(4);
        let steps = dt
            .walk(
                centroid,
                Point3::new(10.0, 10.0, 10.0),
                WalkDirection::TowardSensor,
                1e-12,
            )
            .unwrap();
        assert_eq!(steps.len(), 1);
        assert_ne!(steps[0].tet, INFINITE);
    }

    #[test]
    fn walk_ends_in_tet_containing_sensor() {
        let dt = tetrahedralize(&unit_tet_with_centroid()).unwrap();
        let origin = dt.vertex_of_point(0);
        let sensor = Point3::new(0.5, 0.5, 0.5);
        let steps = dt
            .walk(origin, sensor, WalkDirection::TowardSensor, f64::INFINITY)
            .unwrap();
        let last = steps.last().unwrap();
        assert_ne!(last.tet, INFINITE);
        let expected = dt.vertex(origin).distance(sensor);
        assert!((last.exit_distance - expected).abs() < 1e-12);
    }

    #[test]
    fn grid_points_triangulate_despite_degeneracies() {
        // A 3x3x3 integer grid is rife with cospherical and coplanar subsets.
        let mut pts = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let dt = tetrahedralize(&cloud_of(pts)).unwrap();
        assert_eq!(dt.num_vertices(), 27);
        for t in 0..dt.num_tets() as u32 {
            let [a, b, c, d] = dt.tet_points(t);
            assert!(orient3d(a, b, c, d) > 0.0);
            for v in 0..dt.num_vertices() as u32 {
                if dt.tet(t).contains(&v) {
                    continue;
                }
                assert!(insphere(a, b, c, d, dt.vertex(v)) <= 0.0);
            }
        }
    }
}

//! Quadric edge-collapse decimation.
//!
//! Garland-Heckbert error quadrics with area-weighted face planes,
//! perpendicular constraint planes on boundary edges, a link-condition
//! manifoldness test, and lazy heap invalidation via per-vertex versions.

use nalgebra::{Matrix3, Point3, Vector3};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::spatial::KdTree;
use super::DecimatedMesh;
use crate::scene::SceneMesh;
use crate::{Error, Result};

const BOUNDARY_WEIGHT: f64 = 1e3;

/// Symmetric 4x4 plane quadric stored as its 10 unique coefficients:
/// upper 3x3 `a`, vector `b`, scalar `c`; error(v) = v'Av + 2b'v + c.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric {
    a: [f64; 6], // xx, xy, xz, yy, yz, zz
    b: [f64; 3],
    c: f64,
}

impl Quadric {
    fn from_plane(normal: Vector3<f64>, d: f64, weight: f64) -> Self {
        let n = normal;
        Quadric {
            a: [
                weight * n.x * n.x,
                weight * n.x * n.y,
                weight * n.x * n.z,
                weight * n.y * n.y,
                weight * n.y * n.z,
                weight * n.z * n.z,
            ],
            b: [weight * d * n.x, weight * d * n.y, weight * d * n.z],
            c: weight * d * d,
        }
    }

    fn add(&mut self, other: &Quadric) {
        for i in 0..6 {
            self.a[i] += other.a[i];
        }
        for i in 0..3 {
            self.b[i] += other.b[i];
        }
        self.c += other.c;
    }

    fn error(&self, p: &Point3<f64>) -> f64 {
        let (x, y, z) = (p.x, p.y, p.z);
        let quad = self.a[0] * x * x
            + self.a[3] * y * y
            + self.a[5] * z * z
            + 2.0 * (self.a[1] * x * y + self.a[2] * x * z + self.a[4] * y * z);
        let lin = 2.0 * (self.b[0] * x + self.b[1] * y + self.b[2] * z);
        (quad + lin + self.c).max(0.0)
    }

    /// Optimal placement, when the 3x3 system is well conditioned.
    fn minimizer(&self) -> Option<Point3<f64>> {
        let m = Matrix3::new(
            self.a[0], self.a[1], self.a[2], self.a[1], self.a[3], self.a[4], self.a[2],
            self.a[4], self.a[5],
        );
        let scale = m.norm();
        if scale == 0.0 {
            return None;
        }
        let det = m.determinant();
        if det.abs() < 1e-10 * scale.powi(3) {
            return None;
        }
        let rhs = -Vector3::new(self.b[0], self.b[1], self.b[2]);
        m.try_inverse().map(|inv| Point3::from(inv * rhs))
    }
}

#[derive(Debug)]
struct Candidate {
    cost: f64,
    u: u32,
    v: u32,
    version_u: u32,
    version_v: u32,
    placement: Point3<f64>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.u == other.u && self.v == other.v
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost; deterministic tie-break on the vertex pair
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.u.cmp(&self.u))
            .then_with(|| other.v.cmp(&self.v))
    }
}

struct Mesh {
    positions: Vec<Point3<f64>>,
    colors: Option<Vec<[u8; 3]>>,
    quadrics: Vec<Quadric>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_alive: Vec<bool>,
    vertex_faces: Vec<HashSet<u32>>,
    version: Vec<u32>,
    alive_vertices: usize,
}

impl Mesh {
    fn neighbors(&self, v: u32) -> HashSet<u32> {
        let mut out = HashSet::new();
        for &f in &self.vertex_faces[v as usize] {
            for &w in &self.faces[f as usize] {
                if w != v {
                    out.insert(w);
                }
            }
        }
        out
    }

    /// Faces containing both endpoints of the edge.
    fn shared_faces(&self, u: u32, v: u32) -> Vec<u32> {
        self.vertex_faces[u as usize]
            .iter()
            .filter(|f| self.faces[**f as usize].contains(&v))
            .copied()
            .collect()
    }

    /// Link condition: the common neighbors of u and v must be exactly the
    /// apex vertices of the faces shared by the edge, and no surviving face
    /// may become a duplicate of an existing one.
    fn collapse_is_manifold(&self, u: u32, v: u32) -> bool {
        let shared = self.shared_faces(u, v);
        if shared.is_empty() {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common: HashSet<u32> = nu.intersection(&nv).copied().collect();
        let mut apexes = HashSet::new();
        for f in &shared {
            for &w in &self.faces[*f as usize] {
                if w != u && w != v {
                    apexes.insert(w);
                }
            }
        }
        if common != apexes {
            return false;
        }
        let sorted = |mut t: [u32; 3]| {
            t.sort_unstable();
            t
        };
        let u_faces: HashSet<[u32; 3]> = self.vertex_faces[u as usize]
            .iter()
            .map(|&f| sorted(self.faces[f as usize]))
            .collect();
        for &f in &self.vertex_faces[v as usize] {
            let face = self.faces[f as usize];
            if face.contains(&u) {
                continue; // dies in the collapse
            }
            let substituted = sorted([
                if face[0] == v { u } else { face[0] },
                if face[1] == v { u } else { face[1] },
                if face[2] == v { u } else { face[2] },
            ]);
            if u_faces.contains(&substituted) {
                return false;
            }
        }
        true
    }

    /// Collapse v into u, moving u to `placement`. Only u's quadric and
    /// position change, so only u's version is bumped; edges not incident to
    /// u or v keep their heap entries. Returns u's new neighbors.
    fn collapse(&mut self, u: u32, v: u32, placement: Point3<f64>) -> Vec<u32> {
        self.positions[u as usize] = placement;
        let q = self.quadrics[v as usize];
        self.quadrics[u as usize].add(&q);
        let v_faces: Vec<u32> = self.vertex_faces[v as usize].iter().copied().collect();
        for f in v_faces {
            let face = &mut self.faces[f as usize];
            if face.contains(&u) {
                // face spanned the collapsing edge: it degenerates
                if self.face_alive[f as usize] {
                    self.face_alive[f as usize] = false;
                    for &w in self.faces[f as usize].clone().iter() {
                        self.vertex_faces[w as usize].remove(&f);
                    }
                }
            } else {
                for w in face.iter_mut() {
                    if *w == v {
                        *w = u;
                    }
                }
                self.vertex_faces[u as usize].insert(f);
            }
        }
        self.vertex_faces[v as usize].clear();
        self.vertex_alive[v as usize] = false;
        self.alive_vertices -= 1;
        self.version[u as usize] = self.version[u as usize].wrapping_add(1);

        let mut fresh: Vec<u32> = self.neighbors(u).into_iter().collect();
        fresh.sort_unstable();
        fresh
    }
}

fn face_normal_area(positions: &[Point3<f64>], f: &[u32; 3]) -> (Vector3<f64>, f64) {
    let p0 = positions[f[0] as usize];
    let p1 = positions[f[1] as usize];
    let p2 = positions[f[2] as usize];
    let cross = (p1 - p0).cross(&(p2 - p0));
    let norm = cross.norm();
    if norm < 1e-30 {
        (Vector3::zeros(), 0.0)
    } else {
        (cross / norm, norm / 2.0)
    }
}

fn edge_candidate(mesh: &Mesh, u: u32, v: u32) -> Candidate {
    let mut q = mesh.quadrics[u as usize];
    q.add(&mesh.quadrics[v as usize]);
    let pu = mesh.positions[u as usize];
    let pv = mesh.positions[v as usize];
    let mid = Point3::from((pu.coords + pv.coords) / 2.0);
    let mut best = mid;
    let mut best_cost = q.error(&mid);
    for cand in [pu, pv] {
        let cost = q.error(&cand);
        if cost < best_cost {
            best_cost = cost;
            best = cand;
        }
    }
    if let Some(opt) = q.minimizer() {
        let cost = q.error(&opt);
        if cost < best_cost {
            best_cost = cost;
            best = opt;
        }
    }
    Candidate {
        cost: best_cost,
        u: u.min(v),
        v: u.max(v),
        version_u: mesh.version[u.min(v) as usize],
        version_v: mesh.version[u.max(v) as usize],
        placement: best,
    }
}

/// Decimate by iterative quadric-minimizing edge collapse until at most
/// `target` vertices remain.
///
/// When legal (manifold-preserving) collapses run out early the best
/// achieved mesh is returned with `reached_target = false`. The origin map
/// assigns every original vertex its nearest surviving vertex.
pub fn decimate_qem(mesh: &SceneMesh, target: usize) -> Result<DecimatedMesh> {
    if target < 4 {
        return Err(Error::InvalidArgument(format!(
            "decimation target must be >= 4, got {target}"
        )));
    }
    if mesh.face_count() == 0 {
        return Err(Error::InvalidArgument("decimation needs at least one face".into()));
    }
    mesh.validate()?;

    let n = mesh.vertex_count();
    if n <= target {
        return Ok(DecimatedMesh {
            mesh: mesh.clone(),
            origin_map: (0..n as u32).collect(),
            reached_target: true,
        });
    }

    let mut state = Mesh {
        positions: mesh.vertices.clone(),
        colors: mesh.colors.clone(),
        quadrics: vec![Quadric::default(); n],
        faces: mesh.faces.clone(),
        face_alive: vec![true; mesh.face_count()],
        vertex_alive: vec![true; n],
        vertex_faces: vec![HashSet::new(); n],
        version: vec![0; n],
        alive_vertices: n,
    };
    for (fi, f) in state.faces.iter().enumerate() {
        for &v in f {
            state.vertex_faces[v as usize].insert(fi as u32);
        }
    }

    // face plane quadrics, area weighted
    for f in &state.faces {
        let (normal, area) = face_normal_area(&state.positions, f);
        if area == 0.0 {
            continue;
        }
        let d = -normal.dot(&state.positions[f[0] as usize].coords);
        let q = Quadric::from_plane(normal, d, area);
        for &v in f {
            state.quadrics[v as usize].add(&q);
        }
    }

    // boundary constraint planes: perpendicular to the single adjacent face
    let mut edge_faces: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for (fi, f) in state.faces.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = edge_faces.entry(key).or_insert((0, fi as u32));
            entry.0 += 1;
            entry.1 = fi as u32;
        }
    }
    for (&(a, b), &(count, face)) in &edge_faces {
        if count != 1 {
            continue;
        }
        let (fnormal, area) = face_normal_area(&state.positions, &state.faces[face as usize]);
        if area == 0.0 {
            continue;
        }
        let pa = state.positions[a as usize];
        let pb = state.positions[b as usize];
        let edge = pb - pa;
        let len2 = edge.norm_squared();
        if len2 < 1e-30 {
            continue;
        }
        let constraint = fnormal.cross(&edge.normalize());
        let d = -constraint.dot(&pa.coords);
        let q = Quadric::from_plane(constraint, d, BOUNDARY_WEIGHT * len2);
        state.quadrics[a as usize].add(&q);
        state.quadrics[b as usize].add(&q);
    }

    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    for &(a, b) in edge_faces.keys() {
        heap.push(edge_candidate(&state, a, b));
    }

    while state.alive_vertices > target {
        let Some(cand) = heap.pop() else {
            break; // collapse exhaustion
        };
        let (u, v) = (cand.u, cand.v);
        if !state.vertex_alive[u as usize]
            || !state.vertex_alive[v as usize]
            || cand.version_u != state.version[u as usize]
            || cand.version_v != state.version[v as usize]
        {
            continue; // stale entry
        }
        if !state.collapse_is_manifold(u, v) {
            continue;
        }
        let neighbors = state.collapse(u, v, cand.placement);
        for &w in &neighbors {
            heap.push(edge_candidate(&state, u, w));
        }
    }
    let reached_target = state.alive_vertices <= target;

    // compact: keep vertices referenced by live faces
    let mut keep: Vec<bool> = vec![false; n];
    let mut any_face = false;
    for (fi, f) in state.faces.iter().enumerate() {
        if state.face_alive[fi] {
            any_face = true;
            for &v in f {
                keep[v as usize] = true;
            }
        }
    }
    if !any_face {
        for v in 0..n {
            keep[v] = state.vertex_alive[v];
        }
    }
    let mut remap: Vec<u32> = vec![u32::MAX; n];
    let mut positions = Vec::new();
    let mut colors = state.colors.as_ref().map(|_| Vec::new());
    for v in 0..n {
        if keep[v] {
            remap[v] = positions.len() as u32;
            positions.push(state.positions[v]);
            if let (Some(out), Some(src)) = (&mut colors, &state.colors) {
                out.push(src[v]);
            }
        }
    }
    let faces: Vec<[u32; 3]> = state
        .faces
        .iter()
        .enumerate()
        .filter(|(fi, _)| state.face_alive[*fi])
        .map(|(_, f)| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .collect();

    let tree = KdTree::build(&positions);
    let origin_map: Vec<u32> = mesh.vertices.iter().map(|p| tree.nearest(p)).collect();

    let decimated = SceneMesh::new(
        mesh.scene_id.clone(),
        positions,
        colors,
        faces,
    )?;
    Ok(DecimatedMesh {
        mesh: decimated,
        origin_map,
        reached_target,
    })
}

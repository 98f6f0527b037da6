//! Cotangent stiffness matrix, lumped mass and mesh edge bookkeeping.

use nalgebra::DMatrix;
use std::collections::HashMap;

use crate::scene::SceneMesh;

/// Per-edge cotangent weights are clamped to this range so sliver triangles
/// cannot blow up or flip the operator.
const COT_WEIGHT_MIN: f64 = 1e-6;
const COT_WEIGHT_MAX: f64 = 1e6;

pub(crate) struct MeshOperators {
    /// Positive semidefinite cotangent stiffness matrix S (the negated
    /// cotangent Laplacian), dense.
    pub stiffness: DMatrix<f64>,
    /// Lumped (barycentric) vertex areas.
    pub mass: Vec<f64>,
    pub mean_edge_length: f64,
    /// True for vertices on a boundary edge (an edge with one face).
    pub boundary: Vec<bool>,
}

fn cot(a: nalgebra::Vector3<f64>, b: nalgebra::Vector3<f64>) -> f64 {
    let cross = a.cross(&b).norm();
    if cross < 1e-30 {
        // degenerate corner: treat as extremely flat
        return COT_WEIGHT_MAX;
    }
    a.dot(&b) / cross
}

pub(crate) fn build_operators(mesh: &SceneMesh) -> MeshOperators {
    let n = mesh.vertex_count();
    let mut weights: HashMap<(u32, u32), f64> = HashMap::new();
    let mut edge_face_count: HashMap<(u32, u32), u32> = HashMap::new();
    let mut mass = vec![0.0; n];

    for f in &mesh.faces {
        let p = [
            mesh.vertices[f[0] as usize],
            mesh.vertices[f[1] as usize],
            mesh.vertices[f[2] as usize],
        ];
        let area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm() / 2.0;
        for &v in f {
            mass[v as usize] += area / 3.0;
        }
        for corner in 0..3 {
            let (i, j) = (f[corner], f[(corner + 1) % 3]);
            // cot of the angle at the third vertex weights edge (i, j)
            let apex = (corner + 2) % 3;
            let c = cot(p[corner] - p[apex], p[(corner + 1) % 3] - p[apex]);
            let key = (i.min(j), i.max(j));
            *weights.entry(key).or_insert(0.0) += c / 2.0;
            *edge_face_count.entry(key).or_insert(0) += 1;
        }
    }

    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    let mut total_len = 0.0;
    for (&(i, j), &w) in &weights {
        let w = w.clamp(COT_WEIGHT_MIN, COT_WEIGHT_MAX);
        let (i, j) = (i as usize, j as usize);
        stiffness[(i, j)] -= w;
        stiffness[(j, i)] -= w;
        stiffness[(i, i)] += w;
        stiffness[(j, j)] += w;
        total_len += (mesh.vertices[i] - mesh.vertices[j]).norm();
    }
    let mean_edge_length = if weights.is_empty() {
        0.0
    } else {
        total_len / weights.len() as f64
    };

    let mut boundary = vec![false; n];
    for (&(i, j), &count) in &edge_face_count {
        if count == 1 {
            boundary[i as usize] = true;
            boundary[j as usize] = true;
        }
    }

    MeshOperators {
        stiffness,
        mass,
        mean_edge_length,
        boundary,
    }
}

/// Unique undirected edges with Euclidean lengths.
pub(crate) fn edge_list(mesh: &SceneMesh) -> Vec<(u32, u32, f64)> {
    let mut set = std::collections::HashSet::new();
    let mut out = Vec::new();
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if set.insert(key) {
                let len = (mesh.vertices[a as usize] - mesh.vertices[b as usize]).norm();
                out.push((key.0, key.1, len));
            }
        }
    }
    out.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    out
}

//! PCA vertex normals from Euclidean nearest neighbors.

use nalgebra::{Matrix3, Vector3};

use super::spatial::KdTree;
use super::NormalField;
use crate::scene::SceneMesh;
use crate::{Error, Result};

/// A neighborhood is degenerate when its second principal variance is this
/// far below the leading one (colinear or coincident points).
const DEGENERACY_RATIO: f64 = 1e-10;

/// Estimate unit vertex normals by plane-fitting each vertex together with
/// its `k` Euclidean nearest neighbors.
///
/// The normal is the least-variance principal direction of the
/// neighborhood. Degenerate neighborhoods get a zero normal and a flag;
/// downstream angular distances treat them as maximally distant.
pub fn estimate_normals(mesh: &SceneMesh, k: usize) -> Result<NormalField> {
    let n = mesh.vertex_count();
    if k == 0 {
        return Err(Error::InvalidArgument("neighbor count must be >= 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs more than k = {k} vertices, got {n}"
        )));
    }
    let tree = KdTree::build(&mesh.vertices);
    let mut normals = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for (i, p) in mesh.vertices.iter().enumerate() {
        // the vertex itself plus its k nearest neighbors; the self-match is
        // the zero-distance hit
        let mut hood = tree.knn(p, k + 1);
        if !hood.contains(&(i as u32)) {
            // coincident points can push the self-match out; force it in
            hood.pop();
            hood.push(i as u32);
        }
        let mut centroid = Vector3::zeros();
        for &j in &hood {
            centroid += mesh.vertices[j as usize].coords;
        }
        centroid /= hood.len() as f64;
        let mut cov = Matrix3::<f64>::zeros();
        for &j in &hood {
            let d = mesh.vertices[j as usize].coords - centroid;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let (lo, mid, hi) = (order[0], order[1], order[2]);
        let max_val = eig.eigenvalues[hi].max(0.0);
        if max_val <= 0.0 || eig.eigenvalues[mid] <= DEGENERACY_RATIO * max_val {
            normals.push(Vector3::zeros());
            degenerate.push(true);
            continue;
        }
        let normal = eig.eigenvectors.column(lo).normalize();
        normals.push(normal);
        degenerate.push(false);
    }
    Ok(NormalField::new(normals, degenerate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{grid_mesh, icosphere};
    use nalgebra::{Point3, Rotation3};

    #[test]
    fn flat_plane_normals_are_vertical() {
        let mesh = grid_mesh(8, 8, 0.5);
        let field = estimate_normals(&mesh, 10).unwrap();
        for i in 0..field.len() {
            assert!(!field.is_degenerate(i));
            let nz = field.normals()[i].z.abs();
            assert!((nz - 1.0).abs() < 1e-9, "normal {i} not vertical: {nz}");
        }
    }

    /// Radial-direction oracle: icosphere normals align with the radius.
    #[test]
    fn icosphere_normals_are_radial() {
        let mesh = icosphere(4);
        assert_eq!(mesh.vertex_count(), 2562);
        let field = estimate_normals(&mesh, 10).unwrap();
        for (i, p) in mesh.vertices.iter().enumerate() {
            let radial = p.coords.normalize();
            let dot = field.normals()[i].dot(&radial).abs();
            assert!(dot > 0.99, "vertex {i}: |n.r| = {dot}");
        }
    }

    #[test]
    fn colinear_neighborhood_is_flagged() {
        let vertices: Vec<Point3<f64>> =
            (0..12).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let mesh = SceneMesh::new("line", vertices, None, vec![]).unwrap();
        let field = estimate_normals(&mesh, 10).unwrap();
        for i in 0..field.len() {
            assert!(field.is_degenerate(i));
            assert_eq!(field.normals()[i], Vector3::zeros());
        }
    }

    /// Rotating the mesh rotates the normals (up to sign). Tiny seeded
    /// jitter breaks the icosphere's exact neighbor-distance ties, which
    /// would otherwise let the rotation change kNN neighborhoods.
    #[test]
    fn normals_rotate_with_the_mesh() {
        use rand::{Rng, SeedableRng};
        let mut mesh = icosphere(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        for p in &mut mesh.vertices {
            for a in 0..3 {
                p[a] += rng.random_range(-1e-3..1e-3);
            }
        }
        let rot = Rotation3::from_euler_angles(0.4, -0.9, 1.3);
        let mut rotated = mesh.clone();
        for p in &mut rotated.vertices {
            *p = rot * *p;
        }
        let before = estimate_normals(&mesh, 10).unwrap();
        let after = estimate_normals(&rotated, 10).unwrap();
        for i in 0..before.len() {
            let expect = rot * before.normals()[i];
            let got = after.normals()[i];
            let agreement = expect.dot(&got).abs();
            assert!(
                (agreement - 1.0).abs() < 1e-6,
                "vertex {i}: |cos| = {agreement}"
            );
        }
    }
}

//! Heat-method geodesic distances.
//!
//! Three steps per source: integrate heat for a short time t, normalize the
//! negated gradient field, recover distances from a Poisson solve. Both
//! factorizations are shared across sources; per-source solves run in
//! parallel. On meshes with boundary the heat step averages the Neumann and
//! Dirichlet solutions, which removes most of the boundary bias.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};
use ndarray::Array2;
use rayon::prelude::*;

use super::laplacian::build_operators;
use super::{connected_components, DistanceKind, DistanceMatrix, HeatGeodesicConfig};
use crate::scene::SceneMesh;
use crate::{Error, Result};

struct FaceGeometry {
    verts: [u32; 3],
    normal: Vector3<f64>,
    double_area: f64,
    /// Edge vector opposite each corner, counterclockwise.
    opposite: [Vector3<f64>; 3],
}

fn face_geometry(mesh: &SceneMesh) -> Vec<FaceGeometry> {
    mesh.faces
        .iter()
        .map(|f| {
            let p0 = mesh.vertices[f[0] as usize];
            let p1 = mesh.vertices[f[1] as usize];
            let p2 = mesh.vertices[f[2] as usize];
            let cross = (p1 - p0).cross(&(p2 - p0));
            let double_area = cross.norm();
            let normal = if double_area > 1e-30 {
                cross / double_area
            } else {
                Vector3::zeros()
            };
            FaceGeometry {
                verts: *f,
                normal,
                double_area,
                opposite: [p2 - p1, p0 - p2, p1 - p0],
            }
        })
        .collect()
}

/// All-pairs geodesic distances via the heat method, symmetrized.
pub fn heat_geodesics(mesh: &SceneMesh, cfg: &HeatGeodesicConfig) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let n = mesh.vertex_count();
    if n < 3 || mesh.face_count() == 0 {
        return Err(Error::InvalidArgument(
            "heat geodesics need a triangulated mesh".into(),
        ));
    }
    let components = connected_components(mesh);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }

    let ops = build_operators(mesh);
    if ops.mean_edge_length <= 0.0 {
        return Err(Error::InvalidMesh("mesh has no edges".into()));
    }
    let t = cfg.time_scale * ops.mean_edge_length * ops.mean_edge_length;

    // heat step: (M + tS) u = delta
    let mut heat_sys = ops.stiffness.clone() * t;
    for i in 0..n {
        heat_sys[(i, i)] += ops.mass[i];
    }
    let heat_chol = heat_sys
        .cholesky()
        .ok_or_else(|| Error::InvalidMesh("heat system is not positive definite".into()))?;

    // optional Dirichlet variant on the interior for boundary averaging
    let interior: Vec<usize> = (0..n).filter(|&i| !ops.boundary[i]).collect();
    let has_boundary = interior.len() != n;
    let dirichlet = if has_boundary && !interior.is_empty() {
        let m = interior.len();
        let mut sys = DMatrix::<f64>::zeros(m, m);
        for (a, &i) in interior.iter().enumerate() {
            for (b, &j) in interior.iter().enumerate() {
                sys[(a, b)] = ops.stiffness[(i, j)] * t;
            }
            sys[(a, a)] += ops.mass[i];
        }
        Some((
            sys.cholesky().ok_or_else(|| {
                Error::InvalidMesh("Dirichlet heat system is not positive definite".into())
            })?,
            interior.clone(),
        ))
    } else {
        None
    };

    // Poisson step: S phi = -div, pinned at vertex 0
    let poisson = ops.stiffness.view((1, 1), (n - 1, n - 1)).into_owned();
    let poisson_chol = poisson
        .cholesky()
        .ok_or_else(|| Error::InvalidMesh("Poisson system is not positive definite".into()))?;

    let faces = face_geometry(mesh);
    let mut vertex_faces: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            vertex_faces[v as usize].push(fi as u32);
        }
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|source| {
            solve_single_source(
                source,
                n,
                &heat_chol,
                dirichlet.as_ref(),
                &poisson_chol,
                &faces,
                &vertex_faces,
            )
        })
        .collect();

    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let sym = 0.5 * (rows[i][j] + rows[j][i]);
            values[[i, j]] = if i == j { 0.0 } else { sym.max(0.0) };
        }
    }
    DistanceMatrix::new(values, DistanceKind::Geodesic)
}

fn solve_single_source(
    source: usize,
    n: usize,
    heat_chol: &Cholesky<f64, Dyn>,
    dirichlet: Option<&(Cholesky<f64, Dyn>, Vec<usize>)>,
    poisson_chol: &Cholesky<f64, Dyn>,
    faces: &[FaceGeometry],
    vertex_faces: &[Vec<u32>],
) -> Vec<f64> {
    let mut delta = DVector::<f64>::zeros(n);
    delta[source] = 1.0;
    let mut u = heat_chol.solve(&delta);

    if let Some((chol, interior)) = dirichlet {
        let m = interior.len();
        let mut rhs = DVector::<f64>::zeros(m);
        for (a, &i) in interior.iter().enumerate() {
            rhs[a] = delta[i];
        }
        let ud = chol.solve(&rhs);
        let mut u_dirichlet = DVector::<f64>::zeros(n);
        for (a, &i) in interior.iter().enumerate() {
            u_dirichlet[i] = ud[a];
        }
        u = (u + u_dirichlet) / 2.0;
    }

    // normalized negative gradient per face
    let mut field: Vec<Vector3<f64>> = Vec::with_capacity(faces.len());
    for fg in faces {
        if fg.double_area <= 1e-30 {
            field.push(Vector3::zeros());
            continue;
        }
        let mut grad = Vector3::zeros();
        for corner in 0..3 {
            grad += fg.normal.cross(&fg.opposite[corner]) * u[fg.verts[corner] as usize];
        }
        grad /= fg.double_area;
        let norm = grad.norm();
        field.push(if norm > 1e-30 { -grad / norm } else { Vector3::zeros() });
    }

    // integrated divergence at each vertex
    let mut div = vec![0.0; n];
    for (i, incident) in vertex_faces.iter().enumerate() {
        let mut acc = 0.0;
        for &fi in incident {
            let fg = &faces[fi as usize];
            let x = field[fi as usize];
            let corner = fg.verts.iter().position(|&v| v as usize == i).unwrap();
            let (j, k) = ((corner + 1) % 3, (corner + 2) % 3);
            // opposite[m] runs from vertex m+1 to m+2, so the edges leaving
            // corner i are opposite[k] (i -> j) and -opposite[j] (i -> k)
            let e1 = fg.opposite[k];
            let e2 = -fg.opposite[j];
            let cot_at_j = cot_against(e2 - e1, -e1);
            let cot_at_k = cot_against(e1 - e2, -e2);
            acc += cot_at_k * e1.dot(&x) + cot_at_j * e2.dot(&x);
        }
        div[i] = acc / 2.0;
    }

    // S phi = -div with zero-mean right-hand side, pinned phi[0] = 0
    let mean = div.iter().sum::<f64>() / n as f64;
    let mut rhs = DVector::<f64>::zeros(n - 1);
    for i in 1..n {
        rhs[i - 1] = -(div[i] - mean);
    }
    let phi_rest = poisson_chol.solve(&rhs);
    let mut phi = vec![0.0; n];
    for i in 1..n {
        phi[i] = phi_rest[i - 1];
    }
    let base = phi[source];
    for p in &mut phi {
        *p -= base;
    }
    phi
}

fn cot_against(a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let cross = a.cross(&b).norm();
    if cross < 1e-30 {
        return 0.0;
    }
    a.dot(&b) / cross
}

//! Synthetic meshes and scenes for tests, demos and desk-scale experiments.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::scene::SceneMesh;

/// Flat rectangular grid in the z = 0 plane with `nx * ny` vertices.
pub fn grid_mesh(nx: usize, ny: usize, spacing: f64) -> SceneMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    let at = |i: usize, j: usize| (j * nx + i) as u32;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            faces.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            faces.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    SceneMesh::new(format!("grid{nx}x{ny}"), vertices, None, faces).unwrap()
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron() -> SceneMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices: Vec<Point3<f64>> = raw
        .iter()
        .map(|p| {
            let v = Vector3::new(p[0], p[1], p[2]).normalize();
            Point3::from(v)
        })
        .collect();
    let faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    SceneMesh::new("icosahedron", vertices, None, faces).unwrap()
}

/// Unit icosphere: icosahedron subdivided `subdivisions` times, vertices
/// projected onto the unit sphere. Subdivision 4 has 2562 vertices.
pub fn icosphere(subdivisions: usize) -> SceneMesh {
    let base = icosahedron();
    let mut vertices = base.vertices;
    let mut faces = base.faces;
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[a as usize].coords + vertices[b as usize].coords) / 2.0;
                    vertices.push(Point3::from(m.normalize()));
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    SceneMesh::new(format!("icosphere{subdivisions}"), vertices, None, faces).unwrap()
}

/// Grid with seeded height bumps and colors, for pretraining experiments.
pub fn bumpy_grid(n: usize, amplitude: f64, seed: u64) -> SceneMesh {
    let mut mesh = grid_mesh(n, n, 1.0 / (n - 1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fx = rng.random_range(1.0..3.0);
    let fy = rng.random_range(1.0..3.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    for p in &mut mesh.vertices {
        p.z = amplitude
            * ((fx * std::f64::consts::TAU * p.x + phase).sin()
                * (fy * std::f64::consts::TAU * p.y).cos())
            + amplitude * 0.3 * rng.random_range(-1.0..1.0);
    }
    let colors = mesh
        .vertices
        .iter()
        .map(|p| {
            let r = (p.x * 255.0).clamp(0.0, 255.0) as u8;
            let g = (p.y * 255.0).clamp(0.0, 255.0) as u8;
            let b = ((p.z / amplitude.max(1e-9) * 0.5 + 0.5) * 255.0).clamp(0.0, 255.0) as u8;
            [r, g, b]
        })
        .collect();
    mesh.colors = Some(colors);
    mesh.scene_id = format!("bumpy{n}_{seed}");
    mesh
}

/// A connected "room corner" of three planes (floor and two walls) with
/// class-colored vertices. Returns the mesh and the dense per-vertex class
/// (0 = floor, 1 = wall at y = 0, 2 = wall at x = 0).
///
/// Vertices on shared plane boundaries are merged; their class is the first
/// plane that produced them, in the order floor, wall-y, wall-x. Colors are
/// per-class base colors with seeded Gaussian noise of std `color_noise`.
pub fn corner_scene(n: usize, color_noise: f64, seed: u64) -> (SceneMesh, Vec<u32>) {
    assert!(n >= 2);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut classes: Vec<u32> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut index: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let step = 1.0 / (n - 1) as f64;
    let key = |p: &Point3<f64>| {
        (
            (p.x / step).round() as i64,
            (p.y / step).round() as i64,
            (p.z / step).round() as i64,
        )
    };

    let mut add_plane = |class: u32, at: &dyn Fn(usize, usize) -> Point3<f64>| {
        let mut ids = vec![0u32; n * n];
        for j in 0..n {
            for i in 0..n {
                let p = at(i, j);
                let id = *index.entry(key(&p)).or_insert_with(|| {
                    vertices.push(p);
                    classes.push(class);
                    (vertices.len() - 1) as u32
                });
                ids[j * n + i] = id;
            }
        }
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let (a, b, c, d) = (
                    ids[j * n + i],
                    ids[j * n + i + 1],
                    ids[(j + 1) * n + i + 1],
                    ids[(j + 1) * n + i],
                );
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    };

    add_plane(0, &|i, j| Point3::new(i as f64 * step, j as f64 * step, 0.0));
    add_plane(1, &|i, j| Point3::new(i as f64 * step, 0.0, j as f64 * step));
    add_plane(2, &|i, j| Point3::new(0.0, i as f64 * step, j as f64 * step));

    let base = [[205u8, 70, 60], [65, 200, 70], [70, 75, 210]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors: Vec<[u8; 3]> = classes
        .iter()
        .map(|&c| {
            let mut rgb = [0u8; 3];
            for ch in 0..3 {
                let noise: f64 = rng.random_range(-1.0..1.0) * color_noise * 1.7;
                rgb[ch] = (base[c as usize][ch] as f64 + noise).clamp(0.0, 255.0) as u8;
            }
            rgb
        })
        .collect();

    let mesh = SceneMesh::new(
        format!("corner{n}_{seed}"),
        vertices,
        Some(colors),
        faces,
    )
    .unwrap();
    (mesh, classes)
}

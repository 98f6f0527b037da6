use std::time::Instant;
use vibus_core::geometry::{dijkstra_geodesics, heat_geodesics, HeatGeodesicConfig};
use vibus_core::synth::{grid_mesh, icosphere};

fn main() {
    for n in [40usize, 48] {
        let mesh = grid_mesh(n, n, 1.0 / (n - 1) as f64);
        let t0 = Instant::now();
        let d = heat_geodesics(&mesh, &HeatGeodesicConfig::default()).unwrap();
        let dt = t0.elapsed();
        let mut mean = 0.0;
        let mut count = 0usize;
        for i in 0..mesh.vertex_count() {
            for j in 0..mesh.vertex_count() {
                if i == j {
                    continue;
                }
                let euclid = (mesh.vertices[i] - mesh.vertices[j]).norm();
                mean += (d.values()[[i, j]] - euclid).abs() / euclid;
                count += 1;
            }
        }
        println!("grid n={n}: mean rel {:.5} ({dt:?})", mean / count as f64);
    }

    let mesh = icosphere(4);
    let t0 = Instant::now();
    let heat = heat_geodesics(&mesh, &HeatGeodesicConfig::default()).unwrap();
    println!("icosphere(4) heat: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let graph = dijkstra_geodesics(&mesh).unwrap();
    println!("icosphere(4) dijkstra: {:?}", t0.elapsed());
    let n = mesh.vertex_count();
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut m = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = heat.values()[[i, j]];
            let y = graph.values()[[i, j]];
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            m += 1.0;
        }
    }
    let pearson = (m * sxy - sx * sy) / ((m * sxx - sx * sx).sqrt() * (m * syy - sy * sy).sqrt());
    let p0 = mesh.vertices[0];
    let anti = (0..n)
        .min_by(|&a, &b| {
            (mesh.vertices[a].coords + p0.coords)
                .norm()
                .partial_cmp(&(mesh.vertices[b].coords + p0.coords).norm())
                .unwrap()
        })
        .unwrap();
    println!(
        "icosphere(4): pearson {pearson:.6}, antipodal {:.5} vs pi rel {:.5}",
        heat.values()[[0, anti]],
        (heat.values()[[0, anti]] - std::f64::consts::PI).abs() / std::f64::consts::PI
    );
}

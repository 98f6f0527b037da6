//! Mesh geometry: decimation, normals, geodesic and angular distances, and
//! the combined metric driving spectral analysis.

mod decimate;
mod dijkstra;
mod heat;
mod laplacian;
mod metric;
mod normals;
pub(crate) mod spatial;

pub use decimate::decimate_qem;
pub use dijkstra::dijkstra_geodesics;
pub use heat::heat_geodesics;
pub use metric::{
    angular_distance, angular_distance_matrix, combined_distance_matrix, load_distance_cache,
    save_distance_cache, CombinedDistanceConfig, DistanceCache, DEFAULT_DELTA,
};
pub use normals::estimate_normals;

use nalgebra::Vector3;
use ndarray::Array2;

use crate::scene::SceneMesh;
use crate::{Error, Result};

/// Default decimation target.
pub const DEFAULT_DECIMATION_TARGET: usize = 8000;

/// Default neighbor count for normal estimation.
pub const DEFAULT_NORMAL_NEIGHBORS: usize = 10;

/// A decimated mesh together with the original-to-decimated vertex map.
#[derive(Debug, Clone)]
pub struct DecimatedMesh {
    pub mesh: SceneMesh,
    /// For every original vertex, the index of its nearest decimated vertex.
    pub origin_map: Vec<u32>,
    /// False when collapse candidates ran out before reaching the target.
    pub reached_target: bool,
}

/// Unit, orientation-free vertex normals. Degenerate neighborhoods (rank
/// deficient, e.g. colinear) are flagged and carry a zero normal.
#[derive(Debug, Clone)]
pub struct NormalField {
    normals: Vec<Vector3<f64>>,
    degenerate: Vec<bool>,
}

impl NormalField {
    pub(crate) fn new(normals: Vec<Vector3<f64>>, degenerate: Vec<bool>) -> Self {
        NormalField {
            normals,
            degenerate,
        }
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn is_degenerate(&self, vertex: usize) -> bool {
        self.degenerate[vertex]
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Geodesic,
    Angular,
    Combined,
}

/// Symmetric, nonnegative, zero-diagonal pairwise distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    kind: DistanceKind,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>, kind: DistanceKind) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix must be square, got {:?}",
                values.dim()
            )));
        }
        let n = values.nrows();
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::Domain(format!(
                    "distance matrix diagonal entry {i} is {}",
                    values[[i, i]]
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (values[[i, j]], values[[j, i]]);
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::Domain(format!(
                        "invalid distance at ({i},{j}): {a}"
                    )));
                }
                if (a - b).abs() > 1e-9 {
                    return Err(Error::Domain(format!(
                        "asymmetry at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { values, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Mean of the off-diagonal entries.
    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.values.iter().sum();
        total / (n * n - n) as f64
    }

    /// Mean over all entries including the zero diagonal.
    pub fn full_mean(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / (n * n) as f64
    }
}

/// Heat-method time step: `t = time_scale * (mean edge length)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatGeodesicConfig {
    pub time_scale: f64,
}

impl Default for HeatGeodesicConfig {
    fn default() -> Self {
        HeatGeodesicConfig { time_scale: 1.0 }
    }
}

impl HeatGeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_scale > 0.0) || !self.time_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "heat time scale must be positive, got {}",
                self.time_scale
            )));
        }
        Ok(())
    }
}

/// Count connected components of the face-edge graph; isolated vertices
/// count as their own components.
pub fn connected_components(mesh: &SceneMesh) -> usize {
    let n = mesh.vertex_count();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for f in &mesh.faces {
        for e in 0..3 {
            let a = find(&mut parent, f[e]);
            let b = find(&mut parent, f[(e + 1) % 3]);
            if a != b {
                parent[a as usize] = b;
            }
        }
    }
    let mut roots = std::collections::HashSet::new();
    for v in 0..n as u32 {
        roots.insert(find(&mut parent, v));
    }
    roots.len()
}

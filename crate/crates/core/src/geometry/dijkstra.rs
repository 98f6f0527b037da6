//! Exact shortest paths along the mesh edge graph; the test oracle for the
//! heat method.

use ndarray::Array2;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::laplacian::edge_list;
use super::{connected_components, DistanceKind, DistanceMatrix};
use crate::scene::SceneMesh;
use crate::{Error, Result};

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    vertex: u32,
}

impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// All-pairs graph geodesics with Euclidean edge weights.
pub fn dijkstra_geodesics(mesh: &SceneMesh) -> Result<DistanceMatrix> {
    let n = mesh.vertex_count();
    if n == 0 {
        return Err(Error::InvalidArgument("empty mesh".into()));
    }
    let components = connected_components(mesh);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (a, b, len) in edge_list(mesh) {
        adjacency[a as usize].push((b, len));
        adjacency[b as usize].push((a, len));
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|source| {
            let mut dist = vec![f64::INFINITY; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(QueueEntry {
                dist: 0.0,
                vertex: source as u32,
            });
            while let Some(QueueEntry { dist: d, vertex }) = heap.pop() {
                if d > dist[vertex as usize] {
                    continue;
                }
                for &(next, len) in &adjacency[vertex as usize] {
                    let nd = d + len;
                    if nd < dist[next as usize] {
                        dist[next as usize] = nd;
                        heap.push(QueueEntry {
                            dist: nd,
                            vertex: next,
                        });
                    }
                }
            }
            dist
        })
        .collect();

    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = 0.5 * (rows[i][j] + rows[j][i]);
        }
    }
    DistanceMatrix::new(values, DistanceKind::Geodesic)
}

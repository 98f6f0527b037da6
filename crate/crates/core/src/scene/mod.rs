//! Scene meshes, sparse annotations, predictions and pseudo labels.
//!
//! All types are immutable after construction and validated on entry, so the
//! rest of the pipeline can assume in-range indices and matching lengths.

mod labels;
mod ply;

pub use labels::{
    load_dense_labels, load_pseudo_labels, load_sparse_labels, save_pseudo_labels,
    save_sparse_labels,
};
pub use ply::{load_scene, save_scene, PlyFormat};

use nalgebra::Point3;
use ndarray::Array2;
use std::collections::BTreeMap;

use crate::{Error, Result};

/// Triangle mesh with optional per-vertex color, the unit of ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMesh {
    pub scene_id: String,
    pub vertices: Vec<Point3<f64>>,
    /// Per-vertex RGB in [0, 255]; `None` for colorless meshes.
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

impl SceneMesh {
    pub fn new(
        scene_id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        colors: Option<Vec<[u8; 3]>>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let mesh = SceneMesh {
            scene_id: scene_id.into(),
            vertices,
            colors,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Check the structural invariants: face indices in range, no degenerate
    /// face index triples, color length matching vertex count.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {f} references vertex {} but mesh has {n} vertices",
                    face.iter().max().unwrap()
                )));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {f} repeats a vertex index: {face:?}"
                )));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.vertices.len() {
                return Err(Error::InvalidMesh(format!(
                    "{} colors for {} vertices",
                    colors.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box as (min, max); `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}

/// Sparse ground-truth annotations: vertex index -> category id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseLabelSet {
    entries: BTreeMap<u32, u32>,
    num_categories: u32,
}

impl SparseLabelSet {
    pub fn new(entries: BTreeMap<u32, u32>, num_categories: u32, mesh: &SceneMesh) -> Result<Self> {
        let n = mesh.vertex_count() as u32;
        for (&v, &c) in &entries {
            if v >= n {
                return Err(Error::InvalidArgument(format!(
                    "label vertex {v} out of range for mesh with {n} vertices"
                )));
            }
            if c >= num_categories {
                return Err(Error::InvalidArgument(format!(
                    "category {c} exceeds protocol size {num_categories}"
                )));
            }
        }
        Ok(SparseLabelSet {
            entries,
            num_categories,
        })
    }

    pub fn entries(&self) -> &BTreeMap<u32, u32> {
        &self.entries
    }

    pub fn num_categories(&self) -> u32 {
        self.num_categories
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn category_of(&self, vertex: u32) -> Option<u32> {
        self.entries.get(&vertex).copied()
    }
}

/// Per-vertex logits and the argmax category derived from them.
#[derive(Debug, Clone)]
pub struct PredictionField {
    logits: Array2<f64>,
    predicted: Vec<u32>,
}

impl PredictionField {
    /// Build from a logits matrix; `predicted` is the per-row argmax with
    /// ties broken toward the lowest category id.
    pub fn from_logits(logits: Array2<f64>) -> Result<Self> {
        if logits.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "prediction field needs at least one category".into(),
            ));
        }
        let predicted = logits
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0usize;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect();
        Ok(PredictionField { logits, predicted })
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn predicted(&self) -> &[u32] {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn num_categories(&self) -> usize {
        self.logits.ncols()
    }
}

/// A harvested pseudo label: vertex, category, reliable-component posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub vertex: u32,
    pub category: u32,
    pub posterior: f64,
}

/// Pseudo labels kept for re-fine-tuning, sorted by vertex index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    entries: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn new(mut entries: Vec<PseudoLabel>) -> Result<Self> {
        entries.sort_by_key(|e| e.vertex);
        for pair in entries.windows(2) {
            if pair[0].vertex == pair[1].vertex {
                return Err(Error::InvalidArgument(format!(
                    "duplicate pseudo-label vertex {}",
                    pair[0].vertex
                )));
            }
        }
        for e in &entries {
            if !(0.0..=1.0).contains(&e.posterior) {
                return Err(Error::InvalidArgument(format!(
                    "posterior {} outside [0,1] for vertex {}",
                    e.posterior, e.vertex
                )));
            }
        }
        Ok(PseudoLabelSet { entries })
    }

    pub fn entries(&self) -> &[PseudoLabel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> SceneMesh {
        SceneMesh::new(
            "quad",
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            None,
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_face() {
        let err = SceneMesh::new(
            "bad",
            vec![Point3::origin(); 4],
            None,
            vec![[0, 1, 9]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn rejects_repeated_face_index() {
        let err =
            SceneMesh::new("bad", vec![Point3::origin(); 4], None, vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn rejects_color_length_mismatch() {
        let err = SceneMesh::new(
            "bad",
            vec![Point3::origin(); 4],
            Some(vec![[0, 0, 0]; 3]),
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn sparse_labels_validate_range_and_category() {
        let mesh = quad();
        let mut map = BTreeMap::new();
        map.insert(0u32, 3u32);
        map.insert(3u32, 1u32);
        let set = SparseLabelSet::new(map.clone(), 20, &mesh).unwrap();
        assert_eq!(set.category_of(0), Some(3));

        let mut bad = BTreeMap::new();
        bad.insert(12u32, 0u32);
        assert!(SparseLabelSet::new(bad, 20, &mesh).is_err());

        let mut bad = BTreeMap::new();
        bad.insert(0u32, 20u32);
        assert!(SparseLabelSet::new(bad, 20, &mesh).is_err());
    }

    #[test]
    fn prediction_argmax_matches_logits() {
        let logits =
            Array2::from_shape_vec((2, 3), vec![0.1, 0.9, 0.3, 2.0, -1.0, 2.0]).unwrap();
        let pred = PredictionField::from_logits(logits).unwrap();
        // second row ties between category 0 and 2; lowest id wins
        assert_eq!(pred.predicted(), &[1, 0]);
    }

    #[test]
    fn pseudo_labels_reject_duplicates_and_bad_posterior() {
        let ok = PseudoLabelSet::new(vec![
            PseudoLabel { vertex: 3, category: 5, posterior: 0.91 },
            PseudoLabel { vertex: 1, category: 0, posterior: 1.0 },
        ])
        .unwrap();
        assert_eq!(ok.entries()[0].vertex, 1);

        assert!(PseudoLabelSet::new(vec![
            PseudoLabel { vertex: 3, category: 5, posterior: 0.9 },
            PseudoLabel { vertex: 3, category: 1, posterior: 0.8 },
        ])
        .is_err());

        assert!(PseudoLabelSet::new(vec![PseudoLabel {
            vertex: 0,
            category: 0,
            posterior: 1.5
        }])
        .is_err());
    }
}

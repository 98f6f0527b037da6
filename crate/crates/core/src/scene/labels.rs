//! CSV persistence for sparse annotations, dense ground truth and pseudo
//! labels.
//!
//! Sparse and dense label files are headerless `vertex_index,category_id`
//! lines. Pseudo-label files carry a `vertex_index,category_id,posterior`
//! header and six-decimal posteriors. All files are UTF-8 with LF endings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{PseudoLabel, PseudoLabelSet, SceneMesh, SparseLabelSet};
use crate::{Error, Result};

const PSEUDO_HEADER: &str = "vertex_index,category_id,posterior";

fn label_err(line: usize, message: impl Into<String>) -> Error {
    Error::Label {
        line,
        message: message.into(),
    }
}

/// Load sparse `vertex,category` annotations, validated against the mesh.
pub fn load_sparse_labels(
    path: &Path,
    mesh: &SceneMesh,
    num_categories: u32,
) -> Result<SparseLabelSet> {
    let text = fs::read_to_string(path)?;
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (v, c) = parse_pair(line, lineno + 1)?;
        if entries.insert(v, c).is_some() {
            return Err(label_err(lineno + 1, format!("duplicate vertex index {v}")));
        }
    }
    SparseLabelSet::new(entries, num_categories, mesh)
        .map_err(|e| label_err(0, format!("{e} in {}", path.display())))
}

/// Write sparse annotations in load-compatible form.
pub fn save_sparse_labels(labels: &SparseLabelSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (&v, &c) in labels.entries() {
        out.push_str(&format!("{v},{c}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a dense ground-truth file: every vertex of the mesh must be labeled.
pub fn load_dense_labels(path: &Path, mesh: &SceneMesh, num_categories: u32) -> Result<Vec<u32>> {
    let sparse = load_sparse_labels(path, mesh, num_categories)?;
    if sparse.len() != mesh.vertex_count() {
        return Err(label_err(
            0,
            format!(
                "dense label file {} covers {} of {} vertices",
                path.display(),
                sparse.len(),
                mesh.vertex_count()
            ),
        ));
    }
    Ok((0..mesh.vertex_count() as u32)
        .map(|v| sparse.category_of(v).unwrap())
        .collect())
}

fn parse_pair(line: &str, lineno: usize) -> Result<(u32, u32)> {
    let mut parts = line.split(',');
    let v = parts
        .next()
        .and_then(|t| t.trim().parse::<u32>().ok())
        .ok_or_else(|| label_err(lineno, format!("invalid vertex index in `{line}`")))?;
    let c = parts
        .next()
        .and_then(|t| t.trim().parse::<u32>().ok())
        .ok_or_else(|| label_err(lineno, format!("invalid category id in `{line}`")))?;
    if parts.next().is_some() {
        return Err(label_err(lineno, format!("too many fields in `{line}`")));
    }
    Ok((v, c))
}

/// Write harvested pseudo labels with six-decimal posteriors.
pub fn save_pseudo_labels(labels: &PseudoLabelSet, path: &Path) -> Result<()> {
    let mut out = String::from(PSEUDO_HEADER);
    out.push('\n');
    for e in labels.entries() {
        out.push_str(&format!("{},{},{:.6}\n", e.vertex, e.category, e.posterior));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a pseudo-label file written by [`save_pseudo_labels`].
pub fn load_pseudo_labels(path: &Path) -> Result<PseudoLabelSet> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PSEUDO_HEADER => {}
        Some((_, other)) => {
            return Err(label_err(1, format!("expected pseudo-label header, got `{other}`")));
        }
        None => return Err(label_err(1, "empty pseudo-label file")),
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let vertex = parts
            .next()
            .and_then(|t| t.parse::<u32>().ok())
            .ok_or_else(|| label_err(lineno + 1, format!("invalid vertex index in `{line}`")))?;
        let category = parts
            .next()
            .and_then(|t| t.parse::<u32>().ok())
            .ok_or_else(|| label_err(lineno + 1, format!("invalid category id in `{line}`")))?;
        let posterior = parts
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| label_err(lineno + 1, format!("invalid posterior in `{line}`")))?;
        entries.push(PseudoLabel {
            vertex,
            category,
            posterior,
        });
    }
    PseudoLabelSet::new(entries)
}

//! Versioned binary checkpoints: layer shapes, row-major float32 weights
//! and a JSON config echo. Loading rejects shape mismatches.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{ClassifierHead, EncoderParams, Linear, SegmentationModel};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"VIBC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub dropout_rate: f64,
    pub num_categories: Option<usize>,
}

/// Encoder weights plus an optional classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderParams,
    pub head: Option<ClassifierHead>,
}

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            hidden_dim: self.encoder.hidden_dim(),
            feature_dim: self.encoder.feature_dim(),
            dropout_rate: self.encoder.dropout_rate,
            num_categories: self.head.as_ref().map(|h| h.num_categories()),
        }
    }

    /// Convert into a segmentation model; errors when no head is stored.
    pub fn into_model(self) -> Result<SegmentationModel> {
        let head = self.head.ok_or_else(|| {
            Error::Checkpoint("checkpoint has no classification head".into())
        })?;
        let model = SegmentationModel {
            encoder: self.encoder,
            head,
        };
        model.validate()?;
        Ok(model)
    }
}

fn push_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for &v in m.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn push_vector(out: &mut Vec<u8>, v: &Array1<f64>) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &x in v.iter() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint at byte {}",
                self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        if cols == 0 {
            return Err(Error::Checkpoint("expected a matrix, found a vector".into()));
        }
        let bytes = self.take(rows * cols * 4)?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Checkpoint(format!("bad matrix shape: {e}")))
    }

    fn vector(&mut self) -> Result<Array1<f64>> {
        let len = self.u32()? as usize;
        let marker = self.u32()?;
        if marker != 0 {
            return Err(Error::Checkpoint("expected a vector, found a matrix".into()));
        }
        let bytes = self.take(len * 4)?;
        Ok(Array1::from_iter(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
        ))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.encoder.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&ckpt.meta())?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for layer in &ckpt.encoder.layers {
        push_matrix(&mut out, &layer.weight);
        push_vector(&mut out, &layer.bias);
    }
    if let Some(head) = &ckpt.head {
        push_matrix(&mut out, &head.linear.weight);
        push_vector(&mut out, &head.linear.bias);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = fs::read(path)?;
    let mut r = Reader { data: &data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;

    let mut layers = Vec::with_capacity(3);
    for _ in 0..3 {
        let weight = r.matrix()?;
        let bias = r.vector()?;
        if bias.len() != weight.ncols() {
            return Err(Error::Checkpoint(format!(
                "bias width {} does not match weight columns {}",
                bias.len(),
                weight.ncols()
            )));
        }
        layers.push(Linear { weight, bias });
    }
    let encoder = EncoderParams {
        layers,
        dropout_rate: meta.dropout_rate,
    };
    encoder.validate().map_err(|e| {
        Error::Checkpoint(format!("stored encoder shapes are inconsistent: {e}"))
    })?;
    if encoder.hidden_dim() != meta.hidden_dim || encoder.feature_dim() != meta.feature_dim {
        return Err(Error::Checkpoint(format!(
            "config echo ({}, {}) does not match stored shapes ({}, {})",
            meta.hidden_dim,
            meta.feature_dim,
            encoder.hidden_dim(),
            encoder.feature_dim()
        )));
    }

    let head = match meta.num_categories {
        Some(c) => {
            let weight = r.matrix()?;
            let bias = r.vector()?;
            if weight.nrows() != encoder.feature_dim() || weight.ncols() != c || bias.len() != c {
                return Err(Error::Checkpoint(format!(
                    "head shape ({}, {}) does not match feature dim {} and {} categories",
                    weight.nrows(),
                    weight.ncols(),
                    encoder.feature_dim(),
                    c
                )));
            }
            Some(ClassifierHead {
                linear: Linear { weight, bias },
            })
        }
        None => None,
    };
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }
    Ok(Checkpoint { encoder, head })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(ckpt: &Checkpoint) -> Checkpoint {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(ckpt, &path).unwrap();
        load_checkpoint(&path).unwrap()
    }

    #[test]
    fn round_trip_encoder_only() {
        let encoder = EncoderParams::init(8, 4, 0.5, 1).unwrap();
        let ckpt = Checkpoint {
            encoder,
            head: None,
        };
        let loaded = roundtrip(&ckpt);
        assert_eq!(loaded.head, None);
        // weights survive through f32 exactly when they were f32-exact;
        // otherwise compare within f32 precision
        for (a, b) in ckpt
            .encoder
            .layers
            .iter()
            .zip(loaded.encoder.layers.iter())
        {
            for (x, y) in a.weight.iter().zip(b.weight.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn round_trip_with_head() {
        let encoder = EncoderParams::init(8, 4, 0.5, 2).unwrap();
        let head = ClassifierHead::init(4, 5, 2).unwrap();
        let ckpt = Checkpoint {
            encoder,
            head: Some(head),
        };
        let loaded = roundtrip(&ckpt);
        assert_eq!(loaded.head.as_ref().unwrap().num_categories(), 5);
        assert_eq!(loaded.meta(), ckpt.meta());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let encoder = EncoderParams::init(8, 4, 0.0, 3).unwrap();
        let ckpt = Checkpoint {
            encoder,
            head: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // corrupt the first layer's column count (offset right after magic,
        // version, meta length and meta)
        let meta_len =
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let shape_at = 12 + meta_len + 4;
        bytes[shape_at..shape_at + 4].copy_from_slice(&100u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn rejects_truncation() {
        let encoder = EncoderParams::init(8, 4, 0.0, 4).unwrap();
        let ckpt = Checkpoint {
            encoder,
            head: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}

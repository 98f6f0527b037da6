//! Exponential affinity kernel with symmetric normalization, and the
//! row-normalized spectral embedding.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{top_k_eigenvectors, AffinityConfig, SigmaMode, SpectralEmbedding};
use crate::geometry::DistanceMatrix;
use crate::{Error, Result};

const ZERO_ROW_EPS: f64 = 1e-12;

/// `Z_ij = exp(-D_ij / (2 sigma^2))` normalized as `W^{-1/2} Z W^{-1/2}`
/// with `W` the diagonal of column sums.
pub fn build_normalized_affinity(d: &DistanceMatrix, cfg: &AffinityConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let n = d.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty distance matrix".into()));
    }
    let sigma = match cfg.sigma {
        SigmaMode::Fixed(s) => s,
        SigmaMode::Auto => {
            let s = d.full_mean();
            if s <= 0.0 {
                return Err(Error::Domain(
                    "auto sigma is zero: all distances vanish".into(),
                ));
            }
            s
        }
    };
    let denom = 2.0 * sigma * sigma;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| (-d.values()[[i, j]] / denom).exp()).collect())
        .collect();
    let mut z = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            z[[i, j]] = v;
        }
    }
    // column sums are all >= 1 thanks to the unit diagonal
    let sums: Array1<f64> = z.sum_axis(ndarray::Axis(0));
    let inv_sqrt: Vec<f64> = sums.iter().map(|&s| 1.0 / s.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            z[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(z)
}

/// Stack the leading k eigenvectors and normalize each row to unit length;
/// rows with norm below 1e-12 are zeroed and flagged.
pub fn spectral_embed(affinity: &Array2<f64>, cfg: &AffinityConfig) -> Result<SpectralEmbedding> {
    cfg.validate()?;
    let n = affinity.nrows();
    if cfg.embedding_length > n {
        return Err(Error::InvalidArgument(format!(
            "embedding length {} exceeds matrix size {n}",
            cfg.embedding_length
        )));
    }
    let (eigenvalues, vectors) = top_k_eigenvectors(affinity, cfg.embedding_length)?;
    let mut rows = vectors;
    let mut zero_rows = vec![false; n];
    for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_ROW_EPS {
            row.fill(0.0);
            zero_rows[i] = true;
        } else {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(SpectralEmbedding::new(rows, eigenvalues, zero_rows))
}

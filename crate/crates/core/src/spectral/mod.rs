//! Spectral analysis: normalized affinity, top-k eigen-embedding, seeded
//! k-means and distance mapping back to the original mesh.

mod affinity;
mod kmeans;
mod lanczos;

pub use affinity::{build_normalized_affinity, spectral_embed};
pub use kmeans::{map_distances, seeded_kmeans, ClusterResult};
pub use lanczos::top_k_eigenvectors;

use ndarray::Array2;

use crate::{Error, Result};

/// Default spectral embedding length.
pub const DEFAULT_EMBEDDING_LENGTH: usize = 50;

/// Smoothing bandwidth of the affinity kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Mean of all N'^2 distance entries, zero diagonal included.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityConfig {
    pub sigma: SigmaMode,
    /// Number of leading eigenvectors k.
    pub embedding_length: usize,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        AffinityConfig {
            sigma: SigmaMode::Auto,
            embedding_length: DEFAULT_EMBEDDING_LENGTH,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        if let SigmaMode::Fixed(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be positive, got {s}"
                )));
            }
        }
        if self.embedding_length == 0 {
            return Err(Error::InvalidArgument("embedding length must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-normalized stack of the leading eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// N' x k matrix with unit rows (zero rows flagged below).
    rows: Array2<f64>,
    /// Eigenvalues in descending order.
    eigenvalues: Vec<f64>,
    /// Rows whose pre-normalization norm fell below 1e-12.
    zero_rows: Vec<bool>,
}

impl SpectralEmbedding {
    pub(crate) fn new(rows: Array2<f64>, eigenvalues: Vec<f64>, zero_rows: Vec<bool>) -> Self {
        SpectralEmbedding {
            rows,
            eigenvalues,
            zero_rows,
        }
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_zero_row(&self, i: usize) -> bool {
        self.zero_rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

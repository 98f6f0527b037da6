//! Viewpoint-bottleneck self-supervised loss, reference encoder and
//! training loops.
//!
//! The loss pushes the cross-correlation matrix between two viewpoint-
//! transformed representations toward identity: diagonal entries toward 1
//! (invariance) and off-diagonal entries, scaled by `lambda`, toward 0
//! (decorrelation).

mod checkpoint;
mod encoder;
mod loss;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use encoder::{encoder_forward, ClassifierHead, EncoderParams, Linear, SegmentationModel};
pub use loss::{
    column_normalize, cross_correlation, logdet_covariance, vb_loss, vb_loss_grad,
};
pub use train::{Finetuner, Pretrainer, SgdConfig, TrainingLabels};

use ndarray::Array2;

use crate::{Error, Result};

/// An H x D matrix of per-sample feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite feature entry".into()));
        }
        Ok(FeatureMatrix { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Number of samples H.
    pub fn sample_count(&self) -> usize {
        self.values.nrows()
    }

    /// Feature dimension D.
    pub fn feature_dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Configuration of the viewpoint-bottleneck loss.
///
/// `lambda` has no published value and is therefore a required argument
/// rather than a default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VBConfig {
    /// Off-diagonal scale of the loss; must be positive.
    pub lambda: f64,
    /// Representation dimension D.
    pub feature_dim: usize,
    /// Farthest-point-sampling target H.
    pub fps_target: usize,
    /// Train on the squared Frobenius norm (smooth at the optimum); the
    /// plain norm is kept for reporting.
    pub squared_norm: bool,
}

impl VBConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        let cfg = VBConfig {
            lambda,
            feature_dim: 512,
            fps_target: 1024,
            squared_norm: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dims(lambda: f64, feature_dim: usize, fps_target: usize) -> Result<Self> {
        let cfg = VBConfig {
            feature_dim,
            fps_target,
            ..VBConfig::new(lambda)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be >= 1".into()));
        }
        if self.fps_target == 0 {
            return Err(Error::InvalidArgument("fps_target must be >= 1".into()));
        }
        Ok(())
    }
}

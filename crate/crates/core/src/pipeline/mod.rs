//! The end-to-end harvesting pipeline: configuration, MC-dropout
//! uncertainty, pseudo-label selection, segmentation metrics and the
//! five-stage runner.

mod harvest;
mod metrics;
mod run;
mod uncertainty;

pub use harvest::{harvest_pseudo_labels, CategoryFit, HarvestConfig};
pub use metrics::{evaluate_segmentation, SegMetrics};
pub use run::{run_pipeline, PipelineOutcome, SceneInput};
pub use uncertainty::{mc_dropout_uncertainty, mc_statistics, UncertaintyField, UncertaintyMode};

use serde::{Deserialize, Serialize};

use crate::mixture::{EmConfig, MixtureKind};
use crate::{Error, Result};

/// Which statistic drives the per-category mixture fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Gamma mixture on MC-dropout uncertainties.
    Uncertainty,
    /// Beta mixture on normalized spectrum distances.
    Spectrum,
    /// Joint beta-gamma mixture on the pair.
    Joint,
}

impl Strategy {
    pub fn mixture_kind(self) -> MixtureKind {
        match self {
            Strategy::Uncertainty => MixtureKind::Gamma,
            Strategy::Spectrum => MixtureKind::Beta,
            Strategy::Joint => MixtureKind::Joint,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(Strategy::Uncertainty),
            "spectrum" => Ok(Strategy::Spectrum),
            "joint" => Ok(Strategy::Joint),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}`; expected uncertainty | spectrum | joint"
            ))),
        }
    }
}

fn default_feature_dim() -> usize {
    512
}
fn default_hidden_dim() -> usize {
    64
}
fn default_fps_target() -> usize {
    1024
}
fn default_true() -> bool {
    true
}
fn default_pretrain_steps() -> usize {
    2000
}
fn default_finetune_epochs() -> usize {
    300
}
fn default_base_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.99
}
fn default_lr_power() -> f64 {
    0.9
}
fn default_num_categories() -> u32 {
    20
}
fn default_decimation_target() -> usize {
    crate::geometry::DEFAULT_DECIMATION_TARGET
}
fn default_normal_neighbors() -> usize {
    crate::geometry::DEFAULT_NORMAL_NEIGHBORS
}
fn default_delta() -> f64 {
    crate::geometry::DEFAULT_DELTA
}
fn default_heat_time_scale() -> f64 {
    1.0
}
fn default_embedding_length() -> usize {
    crate::spectral::DEFAULT_EMBEDDING_LENGTH
}
fn default_mc_passes() -> usize {
    10
}
fn default_dropout_rate() -> f64 {
    0.5
}
fn default_strategy() -> Strategy {
    Strategy::Uncertainty
}
fn default_em_iterations() -> usize {
    crate::mixture::DEFAULT_EM_ITERATIONS
}
fn default_min_category_samples() -> usize {
    20
}
fn default_uncertainty_mode() -> UncertaintyMode {
    UncertaintyMode::WinningLogit
}

/// Full pipeline configuration; the JSON config file mirrors this struct
/// and rejects unknown keys. `lambda` has no published value and must be
/// set explicitly before any viewpoint-bottleneck stage runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Off-diagonal loss scale; required for pretraining.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_fps_target")]
    pub fps_target: usize,
    #[serde(default = "default_true")]
    pub squared_norm: bool,
    #[serde(default = "default_pretrain_steps")]
    pub pretrain_steps: usize,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_lr_power")]
    pub lr_power: f64,
    #[serde(default = "default_num_categories")]
    pub num_categories: u32,
    /// Sparse annotation budget per scene; informational, any count loads.
    #[serde(default)]
    pub annotation_budget: Option<usize>,
    #[serde(default = "default_decimation_target")]
    pub decimation_target: usize,
    #[serde(default = "default_normal_neighbors")]
    pub normal_neighbors: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_heat_time_scale")]
    pub heat_time_scale: f64,
    #[serde(default = "default_embedding_length")]
    pub embedding_length: usize,
    /// Affinity smoothing; `None` selects the mean-distance auto mode.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_mc_passes")]
    pub mc_passes: usize,
    #[serde(default = "default_dropout_rate")]
    pub dropout_rate: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_em_iterations")]
    pub em_iterations: usize,
    #[serde(default = "default_min_category_samples")]
    pub min_category_samples: usize,
    #[serde(default = "default_uncertainty_mode")]
    pub uncertainty_mode: UncertaintyMode,
    #[serde(default = "default_true")]
    pub harvest_enabled: bool,
    /// Restart stage D from the pretraining checkpoint instead of stage B.
    #[serde(default)]
    pub restart_from_pretrain: bool,
    #[serde(default)]
    pub seed: u64,
    /// Scene ids used for training; empty means every scene with sparse
    /// labels.
    #[serde(default)]
    pub train_scenes: Vec<String>,
    /// Scene ids used for evaluation; empty means every scene with dense
    /// ground truth.
    #[serde(default)]
    pub eval_scenes: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(lambda) = self.lambda {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
            }
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta {} outside [0, 1]", self.delta)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.mc_passes < 2 {
            return Err(Error::Config("mc_passes must be >= 2".into()));
        }
        if self.num_categories == 0 {
            return Err(Error::Config("num_categories must be >= 1".into()));
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.fps_target == 0 {
            return Err(Error::Config("network dimensions must be >= 1".into()));
        }
        if self.embedding_length == 0 {
            return Err(Error::Config("embedding_length must be >= 1".into()));
        }
        if self.decimation_target < 4 {
            return Err(Error::Config("decimation_target must be >= 4".into()));
        }
        if let Some(sigma) = self.sigma {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
            }
        }
        Ok(())
    }

    /// The loss scale, or a config error when it was never provided.
    pub fn require_lambda(&self) -> Result<f64> {
        self.lambda.ok_or_else(|| {
            Error::Config(
                "lambda is required (the viewpoint-bottleneck loss has no published default)"
                    .into(),
            )
        })
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            iterations: self.em_iterations,
        }
    }

    pub fn harvest_config(&self) -> HarvestConfig {
        HarvestConfig {
            strategy: self.strategy,
            em: self.em_config(),
            min_category_samples: self.min_category_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Defaults pinned to the published hyperparameters.
    #[test]
    fn defaults_match_published_hyperparameters() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.fps_target, 1024);
        assert_eq!(cfg.decimation_target, 8000);
        assert_eq!(cfg.embedding_length, 50);
        assert_eq!(cfg.delta, 0.6);
        assert_eq!(cfg.mc_passes, 10);
        assert_eq!(cfg.dropout_rate, 0.5);
        assert_eq!(cfg.em_iterations, 50);
        assert_eq!(cfg.num_categories, 20);
        assert_eq!(cfg.base_lr, 0.1);
        assert_eq!(cfg.momentum, 0.99);
        assert_eq!(cfg.normal_neighbors, 10);
        assert!(cfg.sigma.is_none());
        assert!(cfg.lambda.is_none());
        assert!(cfg.require_lambda().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_json(r#"{"lambda": 0.005, "typo_key": 1}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn strategy_parses_from_str() {
        assert_eq!("joint".parse::<Strategy>().unwrap(), Strategy::Joint);
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(PipelineConfig::from_json(r#"{"lambda": -1.0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"delta": 1.5}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"dropout_rate": 1.0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"mc_passes": 1}"#).is_err());
    }
}

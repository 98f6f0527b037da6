//! Monte-Carlo dropout uncertainty.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scene::SceneMesh;
use crate::seed::{self, tag};
use crate::transforms::SampleIndexSet;
use crate::vb::{encoder_forward, EncoderParams, SegmentationModel};
use crate::{Error, Result};

/// How per-pass logits reduce to a scalar uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    /// Population variance of the winning class's logit across passes.
    WinningLogit,
    /// Trace of the per-class logit variances divided by the class count.
    LogitTrace,
}

/// Per-vertex scalar uncertainty from repeated stochastic forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyField {
    pub values: Vec<f64>,
    pub passes: usize,
    pub dropout_rate: f64,
}

impl UncertaintyField {
    pub fn validate(&self) -> Result<()> {
        if self.passes < 2 {
            return Err(Error::InvalidArgument(format!(
                "uncertainty needs >= 2 passes, got {}",
                self.passes
            )));
        }
        if self.values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("negative or non-finite uncertainty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reduce per-pass logits to (winning class, uncertainty) per vertex.
///
/// The winning class is the argmax of the mean logits, ties toward the
/// lowest id. Variances are population variances (divide by T).
pub fn mc_statistics(passes: &[Array2<f64>], mode: UncertaintyMode) -> Result<(Vec<u32>, Vec<f64>)> {
    let t = passes.len();
    if t < 2 {
        return Err(Error::InvalidArgument("need >= 2 passes".into()));
    }
    let (n, c) = passes[0].dim();
    for p in passes {
        if p.dim() != (n, c) {
            return Err(Error::ShapeMismatch(format!(
                "pass logits {:?} vs {:?}",
                p.dim(),
                (n, c)
            )));
        }
    }
    let mut mean = Array2::<f64>::zeros((n, c));
    for p in passes {
        mean += p;
    }
    mean /= t as f64;

    let mut winners = Vec::with_capacity(n);
    let mut uncertainty = Vec::with_capacity(n);
    for i in 0..n {
        let row = mean.row(i);
        let mut best = 0usize;
        for j in 0..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        winners.push(best as u32);
        let var_of = |class: usize| -> f64 {
            let m = mean[[i, class]];
            passes
                .iter()
                .map(|p| {
                    let d = p[[i, class]] - m;
                    d * d
                })
                .sum::<f64>()
                / t as f64
        };
        let u = match mode {
            UncertaintyMode::WinningLogit => var_of(best),
            UncertaintyMode::LogitTrace => {
                (0..c).map(var_of).sum::<f64>() / c as f64
            }
        };
        uncertainty.push(u);
    }
    Ok((winners, uncertainty))
}

/// Run the model T times with dropout active and reduce the logit spread to
/// a per-vertex uncertainty. Deterministic per seed.
pub fn mc_dropout_uncertainty(
    model: &SegmentationModel,
    mesh: &SceneMesh,
    passes: usize,
    dropout_rate: f64,
    mode: UncertaintyMode,
    seed: u64,
) -> Result<UncertaintyField> {
    if passes < 2 {
        return Err(Error::InvalidArgument(format!(
            "uncertainty needs >= 2 passes, got {passes}"
        )));
    }
    model.validate()?;
    let encoder = EncoderParams {
        layers: model.encoder.layers.clone(),
        dropout_rate,
    };
    encoder.validate()?;
    let indices = SampleIndexSet::full(mesh.vertex_count());
    let mut logits = Vec::with_capacity(passes);
    for pass in 0..passes {
        let pass_seed = seed::mix2(seed, tag::MC_PASS, pass as u64);
        let features = encoder_forward(&encoder, mesh, &indices, true, pass_seed)?;
        logits.push(model.head.forward(features.values()));
    }
    let (_, values) = mc_statistics(&logits, mode)?;
    let field = UncertaintyField {
        values,
        passes,
        dropout_rate,
    };
    field.validate()?;
    Ok(field)
}

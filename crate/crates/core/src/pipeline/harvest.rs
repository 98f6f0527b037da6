//! Pseudo-label harvesting via per-category double mixture models.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use super::{Strategy, UncertaintyField};
use crate::mixture::{
    fit_mixture_em, reliable_posterior, EmConfig, FitDiagnostics, MixtureModel, Observation,
};
use crate::scene::{PredictionField, PseudoLabel, PseudoLabelSet, SparseLabelSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestConfig {
    pub strategy: Strategy,
    pub em: EmConfig,
    /// Categories with fewer predicted members are skipped entirely.
    pub min_category_samples: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            strategy: Strategy::Uncertainty,
            em: EmConfig::default(),
            min_category_samples: 20,
        }
    }
}

/// Outcome of one category's mixture fit, serialized for auditability.
#[derive(Debug, Clone, Serialize)]
pub struct CategoryFit {
    pub category: u32,
    pub members: usize,
    pub harvested: usize,
    pub model: Option<MixtureModel>,
    pub diagnostics: Option<FitDiagnostics>,
    /// Reason the category contributed nothing, when it was skipped.
    pub skipped: Option<String>,
}

/// Min-max normalize to [0, 1]; a constant vector maps to all zeros.
fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Harvest pseudo labels from predictions.
///
/// Vertices are partitioned by predicted category; each category with
/// enough members gets a mixture fit on the strategy's statistic, and a
/// vertex is kept when its reliable posterior strictly exceeds one half.
/// Ground-truth-labeled vertices always pass through with posterior 1 and
/// their annotated category. Spectrum distances are min-max normalized per
/// scene before beta fitting; queries exactly on the beta boundary are
/// clamped inward like the fit samples.
pub fn harvest_pseudo_labels(
    pred: &PredictionField,
    uncertainty: &UncertaintyField,
    spectrum: &[f64],
    sparse: &SparseLabelSet,
    cfg: &HarvestConfig,
) -> Result<(PseudoLabelSet, Vec<CategoryFit>)> {
    let n = pred.len();
    if uncertainty.len() != n || spectrum.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "field lengths differ: {} predictions, {} uncertainties, {} spectrum distances",
            n,
            uncertainty.len(),
            spectrum.len()
        )));
    }
    uncertainty.validate()?;

    let spectrum_norm = min_max_normalize(spectrum);
    let clamp = |v: f64| {
        v.clamp(
            crate::mixture::BETA_BOUNDARY_CLAMP,
            1.0 - crate::mixture::BETA_BOUNDARY_CLAMP,
        )
    };
    let observe = |vertex: usize| -> Observation {
        match cfg.strategy {
            Strategy::Uncertainty => Observation::Scalar(uncertainty.values[vertex]),
            Strategy::Spectrum => Observation::Scalar(clamp(spectrum_norm[vertex])),
            Strategy::Joint => Observation::Pair {
                spectrum: clamp(spectrum_norm[vertex]),
                uncertainty: uncertainty.values[vertex],
            },
        }
    };

    let mut by_category: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (vertex, &category) in pred.predicted().iter().enumerate() {
        if sparse.category_of(vertex as u32).is_none() {
            by_category.entry(category).or_default().push(vertex as u32);
        }
    }

    let kind = cfg.strategy.mixture_kind();
    let groups: Vec<(u32, Vec<u32>)> = by_category.into_iter().collect();
    let fits: Vec<(CategoryFit, Vec<PseudoLabel>)> = groups
        .par_iter()
        .map(|(category, members)| {
            let mut fit = CategoryFit {
                category: *category,
                members: members.len(),
                harvested: 0,
                model: None,
                diagnostics: None,
                skipped: None,
            };
            if members.len() < cfg.min_category_samples {
                fit.skipped = Some(format!(
                    "{} members, need {}",
                    members.len(),
                    cfg.min_category_samples
                ));
                return (fit, Vec::new());
            }
            let samples: Vec<Observation> =
                members.iter().map(|&v| observe(v as usize)).collect();
            match fit_mixture_em(&samples, kind, &cfg.em) {
                Ok((model, diagnostics)) => {
                    let mut kept = Vec::new();
                    for (&vertex, &obs) in members.iter().zip(&samples) {
                        if let Ok(p) = reliable_posterior(&model, obs) {
                            if p > 0.5 {
                                kept.push(PseudoLabel {
                                    vertex,
                                    category: *category,
                                    posterior: p,
                                });
                            }
                        }
                    }
                    fit.harvested = kept.len();
                    fit.model = Some(model);
                    fit.diagnostics = Some(diagnostics);
                    (fit, kept)
                }
                Err(e) => {
                    log::warn!("category {category}: mixture fit failed: {e}");
                    fit.skipped = Some(e.to_string());
                    (fit, Vec::new())
                }
            }
        })
        .collect();

    let mut entries: Vec<PseudoLabel> = Vec::new();
    let mut reports = Vec::with_capacity(fits.len());
    for (report, kept) in fits {
        entries.extend(kept);
        reports.push(report);
    }
    for (&vertex, &category) in sparse.entries() {
        entries.push(PseudoLabel {
            vertex,
            category,
            posterior: 1.0,
        });
    }
    Ok((PseudoLabelSet::new(entries)?, reports))
}

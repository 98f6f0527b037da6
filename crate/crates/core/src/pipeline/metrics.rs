//! Intersection-over-union segmentation metrics.

use serde::Serialize;

use crate::scene::PredictionField;
use crate::{Error, Result};

/// Per-class IoU, their mean, and the confusion matrix (rows = ground
/// truth, columns = prediction). Classes absent from both prediction and
/// ground truth carry `None` and are excluded from the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegMetrics {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl SegMetrics {
    /// Merge per-scene counts before computing IoU (dataset-level metrics).
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if confusion.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("confusion matrix is not square".into()));
        }
        let mut per_class_iou = Vec::with_capacity(c);
        let mut sum = 0.0;
        let mut counted = 0usize;
        for class in 0..c {
            let tp = confusion[class][class];
            let gt_total: u64 = confusion[class].iter().sum();
            let pred_total: u64 = (0..c).map(|g| confusion[g][class]).sum();
            let union = gt_total + pred_total - tp;
            if union == 0 {
                per_class_iou.push(None);
            } else {
                let iou = tp as f64 / union as f64;
                per_class_iou.push(Some(iou));
                sum += iou;
                counted += 1;
            }
        }
        let miou = if counted == 0 { 0.0 } else { sum / counted as f64 };
        Ok(SegMetrics {
            per_class_iou,
            miou,
            confusion,
        })
    }
}

/// Accumulate a confusion matrix from one scene's predictions.
pub(crate) fn accumulate_confusion(
    confusion: &mut [Vec<u64>],
    pred: &PredictionField,
    gt: &[u32],
) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            pred.len(),
            gt.len()
        )));
    }
    let c = confusion.len() as u32;
    for (&p, &g) in pred.predicted().iter().zip(gt) {
        if g >= c || p >= c {
            return Err(Error::InvalidArgument(format!(
                "label {g} or prediction {p} exceeds {c} classes"
            )));
        }
        confusion[g as usize][p as usize] += 1;
    }
    Ok(())
}

/// IoU metrics of one prediction field against dense ground truth.
pub fn evaluate_segmentation(pred: &PredictionField, gt: &[u32]) -> Result<SegMetrics> {
    let c = pred.num_categories();
    let mut confusion = vec![vec![0u64; c]; c];
    accumulate_confusion(&mut confusion, pred, gt)?;
    SegMetrics::from_confusion(confusion)
}

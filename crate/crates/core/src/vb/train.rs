//! Pretraining and fine-tuning loops.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::{input_features, mlp_backward, mlp_forward, ParamGrads};
use super::{EncoderParams, FeatureMatrix, SegmentationModel, VBConfig};
use crate::scene::{PseudoLabelSet, SceneMesh, SparseLabelSet};
use crate::seed::{self, tag};
use crate::transforms::{apply_transform, fps, sample_transform_pair, SampleIndexSet};
use crate::vb::loss::vb_loss_grad;
use crate::{Error, Result};

/// SGD with momentum and polynomial learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_power: f64,
    pub total_steps: usize,
}

impl SgdConfig {
    /// Momentum 0.99 and initial learning rate 0.1, decayed polynomially
    /// over `total_steps`.
    pub fn new(total_steps: usize) -> Self {
        SgdConfig {
            base_lr: 0.1,
            momentum: 0.99,
            lr_power: 0.9,
            total_steps,
        }
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.base_lr;
        }
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.base_lr * (1.0 - frac).max(0.0).powf(self.lr_power)
    }
}

struct Momentum {
    weight: Vec<Array2<f64>>,
    bias: Vec<Array1<f64>>,
}

impl Momentum {
    fn zeros_like(params: &EncoderParams) -> Self {
        let g = ParamGrads::zeros_like(params);
        Momentum {
            weight: g.weight,
            bias: g.bias,
        }
    }

    fn apply(&mut self, params: &mut EncoderParams, grads: &ParamGrads, momentum: f64, lr: f64) {
        for i in 0..params.layers.len() {
            self.weight[i].zip_mut_with(&grads.weight[i], |v, &g| *v = momentum * *v + g);
            self.bias[i].zip_mut_with(&grads.bias[i], |v, &g| *v = momentum * *v + g);
            params.layers[i]
                .weight
                .zip_mut_with(&self.weight[i], |w, &v| *w -= lr * v);
            params.layers[i]
                .bias
                .zip_mut_with(&self.bias[i], |b, &v| *b -= lr * v);
        }
    }
}

/// Self-supervised pretraining driver (stage A).
///
/// Each step draws a fresh transformation pair, samples matching point
/// subsets from both views with a shared random start, and descends the
/// viewpoint-bottleneck loss.
pub struct Pretrainer {
    params: EncoderParams,
    vb: VBConfig,
    sgd: SgdConfig,
    momentum: Momentum,
    step: usize,
}

impl Pretrainer {
    pub fn new(params: EncoderParams, vb: VBConfig, sgd: SgdConfig) -> Result<Self> {
        params.validate()?;
        vb.validate()?;
        if params.feature_dim() != vb.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "encoder outputs {} features, config says {}",
                params.feature_dim(),
                vb.feature_dim
            )));
        }
        let momentum = Momentum::zeros_like(&params);
        Ok(Pretrainer {
            params,
            vb,
            sgd,
            momentum,
            step: 0,
        })
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn into_params(self) -> EncoderParams {
        self.params
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One optimization step on a scene; returns the loss before the update.
    pub fn step(&mut self, mesh: &SceneMesh, seed: u64) -> Result<f64> {
        if mesh.vertex_count() == 0 {
            return Err(Error::InvalidArgument("pretraining on an empty mesh".into()));
        }
        let step_seed = seed::mix2(seed, tag::STEP, self.step as u64);
        let (tp, tq) = sample_transform_pair(step_seed);
        let view_p = apply_transform(&tp, mesh)?;
        let view_q = apply_transform(&tq, mesh)?;

        // shared random start keeps the two FPS index sequences aligned
        // (the position transforms are isometries)
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(step_seed, tag::FPS_START));
        let start = rng.random_range(0..mesh.vertex_count() as u32);
        let idx_p = fps(&view_p, self.vb.fps_target, start)?;
        let idx_q = fps(&view_q, self.vb.fps_target, start)?;

        let trace_p = mlp_forward(&self.params, input_features(&view_p, &idx_p)?, false, 0);
        let trace_q = mlp_forward(&self.params, input_features(&view_q, &idx_q)?, false, 0);
        let feats_p = FeatureMatrix::new(trace_p.features.clone())?;
        let feats_q = FeatureMatrix::new(trace_q.features.clone())?;
        let (loss, d_p, d_q) = vb_loss_grad(&feats_p, &feats_q, &self.vb)?;

        let mut grads = mlp_backward(&self.params, &trace_p, &d_p);
        grads.add(&mlp_backward(&self.params, &trace_q, &d_q));

        let lr = self.sgd.lr_at(self.step);
        self.momentum
            .apply(&mut self.params, &grads, self.sgd.momentum, lr);
        self.step += 1;
        Ok(loss)
    }
}

/// Labels usable for fine-tuning: sparse ground truth or harvested pseudo
/// labels (used as hard targets).
#[derive(Debug, Clone, Copy)]
pub enum TrainingLabels<'a> {
    Sparse(&'a SparseLabelSet),
    Pseudo(&'a PseudoLabelSet),
}

impl TrainingLabels<'_> {
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        match self {
            TrainingLabels::Sparse(s) => s.entries().iter().map(|(&v, &c)| (v, c)).collect(),
            TrainingLabels::Pseudo(p) => {
                p.entries().iter().map(|e| (e.vertex, e.category)).collect()
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            TrainingLabels::Sparse(s) => s.is_empty(),
            TrainingLabels::Pseudo(p) => p.is_empty(),
        }
    }
}

/// Supervised fine-tuning driver (stages B and D).
///
/// Cross-entropy is computed on labeled vertices only; unlabeled vertices
/// are never forwarded, so they contribute exactly zero loss and gradient.
pub struct Finetuner {
    model: SegmentationModel,
    sgd: SgdConfig,
    momentum: Momentum,
    head_w_vel: Array2<f64>,
    head_b_vel: Array1<f64>,
    epoch: usize,
}

impl Finetuner {
    pub fn new(model: SegmentationModel, sgd: SgdConfig) -> Result<Self> {
        model.validate()?;
        let momentum = Momentum::zeros_like(&model.encoder);
        let head_w_vel = Array2::zeros(model.head.linear.weight.raw_dim());
        let head_b_vel = Array1::zeros(model.head.linear.bias.raw_dim());
        Ok(Finetuner {
            model,
            sgd,
            momentum,
            head_w_vel,
            head_b_vel,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &SegmentationModel {
        &self.model
    }

    pub fn into_model(self) -> SegmentationModel {
        self.model
    }

    pub fn epoch_count(&self) -> usize {
        self.epoch
    }

    /// One pass over the scenes, one SGD step per labeled scene. Returns the
    /// mean pre-update loss across labeled scenes.
    pub fn epoch(&mut self, scenes: &[(&SceneMesh, TrainingLabels)], seed: u64) -> Result<f64> {
        if scenes.iter().all(|(_, l)| l.is_empty()) {
            return Err(Error::InvalidArgument(
                "fine-tuning needs at least one labeled vertex".into(),
            ));
        }
        let num_categories = self.model.head.num_categories();
        let mut total = 0.0;
        let mut counted = 0usize;
        for (scene_idx, (mesh, labels)) in scenes.iter().enumerate() {
            let pairs = labels.pairs();
            if pairs.is_empty() {
                continue;
            }
            for &(v, c) in &pairs {
                if v as usize >= mesh.vertex_count() {
                    return Err(Error::InvalidArgument(format!(
                        "label vertex {v} out of range in scene {}",
                        mesh.scene_id
                    )));
                }
                if c as usize >= num_categories {
                    return Err(Error::InvalidArgument(format!(
                        "label category {c} exceeds head width {num_categories}"
                    )));
                }
            }
            let indices: Vec<u32> = pairs.iter().map(|&(v, _)| v).collect();
            let targets: Vec<u32> = pairs.iter().map(|&(_, c)| c).collect();
            let sample = selection(&indices);
            let dropout_on = self.model.encoder.dropout_rate > 0.0;
            let pass_seed = seed::mix2(seed, self.epoch as u64, scene_idx as u64);
            let trace = mlp_forward(
                &self.model.encoder,
                input_features(mesh, &sample)?,
                dropout_on,
                pass_seed,
            );
            let logits = self.model.head.forward(&trace.features);
            let (loss, d_logits) = cross_entropy(&logits, &targets);
            total += loss;
            counted += 1;

            // head gradients and feature gradient
            let d_head_w = trace.features.t().dot(&d_logits);
            let d_head_b = d_logits.sum_axis(ndarray::Axis(0));
            let d_features = d_logits.dot(&self.model.head.linear.weight.t());
            let grads = mlp_backward(&self.model.encoder, &trace, &d_features);

            let lr = self.sgd.lr_at(self.epoch);
            let mu = self.sgd.momentum;
            self.momentum.apply(&mut self.model.encoder, &grads, mu, lr);
            self.head_w_vel.zip_mut_with(&d_head_w, |v, &g| *v = mu * *v + g);
            self.head_b_vel.zip_mut_with(&d_head_b, |v, &g| *v = mu * *v + g);
            self.model
                .head
                .linear
                .weight
                .zip_mut_with(&self.head_w_vel, |w, &v| *w -= lr * v);
            self.model
                .head
                .linear
                .bias
                .zip_mut_with(&self.head_b_vel, |b, &v| *b -= lr * v);
        }
        self.epoch += 1;
        Ok(total / counted as f64)
    }
}

fn selection(indices: &[u32]) -> SampleIndexSet {
    // SampleIndexSet::full then filter would lose order; build directly
    // through the transforms module contract: unique indices.
    SampleIndexSet::from_indices(indices.to_vec())
}

/// Mean cross-entropy and logits gradient for hard targets.
fn cross_entropy(logits: &Array2<f64>, targets: &[u32]) -> (f64, Array2<f64>) {
    let b = logits.nrows();
    let mut d = logits.clone();
    let mut loss = 0.0;
    for (row, &t) in targets.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for &v in logits.row(row) {
            max = max.max(v);
        }
        let mut denom = 0.0;
        for &v in logits.row(row) {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += log_denom - logits[[row, t as usize]];
        for c in 0..logits.ncols() {
            let p = (logits[[row, c]] - log_denom).exp();
            d[[row, c]] = (p - if c as u32 == t { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    (loss / b as f64, d)
}

//! Per-point MLP reference encoder with inverted dropout.
//!
//! The encoder maps each point's `(xyz, rgb)` to a D-dimensional feature:
//! positions are normalized to the scene bounding box, colors to `[0, 1]`
//! (0.5 for colorless meshes). Two hidden ReLU layers carry dropout; the
//! output layer is linear. The backbone is intentionally lightweight and
//! sits behind the forward signature so a heavier network can replace it.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::FeatureMatrix;
use crate::scene::SceneMesh;
use crate::seed::{self, tag};
use crate::transforms::SampleIndexSet;
use crate::{Error, Result};

/// Input feature width: xyz + rgb.
pub const INPUT_DIM: usize = 6;

/// A dense layer with an `in x out` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        Linear {
            weight: Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Encoder parameters: three linear layers and the dropout rate used by the
/// hidden activations.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Linear>,
    pub dropout_rate: f64,
}

impl EncoderParams {
    /// He-initialized MLP `6 -> hidden -> hidden -> feature_dim`.
    pub fn init(hidden_dim: usize, feature_dim: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        if hidden_dim == 0 || feature_dim == 0 {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, tag::INIT));
        let layers = vec![
            Linear::init(INPUT_DIM, hidden_dim, (2.0 / INPUT_DIM as f64).sqrt(), &mut rng),
            Linear::init(hidden_dim, hidden_dim, (2.0 / hidden_dim as f64).sqrt(), &mut rng),
            Linear::init(hidden_dim, feature_dim, (1.0 / hidden_dim as f64).sqrt(), &mut rng),
        ];
        let params = EncoderParams { layers, dropout_rate };
        params.validate()?;
        Ok(params)
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects 3 layers, got {}",
                self.layers.len()
            )));
        }
        if self.layers[0].in_dim() != INPUT_DIM {
            return Err(Error::ShapeMismatch(format!(
                "first layer takes {} inputs, expected {INPUT_DIM}",
                self.layers[0].in_dim()
            )));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::ShapeMismatch("bias width mismatch".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Linear classification head on top of the encoder features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub linear: Linear,
}

impl ClassifierHead {
    pub fn init(feature_dim: usize, num_categories: usize, seed: u64) -> Result<Self> {
        if num_categories == 0 {
            return Err(Error::InvalidArgument("zero categories".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, tag::HEAD_INIT));
        Ok(ClassifierHead {
            linear: Linear::init(
                feature_dim,
                num_categories,
                (1.0 / feature_dim as f64).sqrt(),
                &mut rng,
            ),
        })
    }

    pub fn num_categories(&self) -> usize {
        self.linear.out_dim()
    }

    pub fn forward(&self, features: &Array2<f64>) -> Array2<f64> {
        self.linear.forward(features)
    }
}

/// An encoder together with its classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationModel {
    pub encoder: EncoderParams,
    pub head: ClassifierHead,
}

impl SegmentationModel {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.head.linear.in_dim() != self.encoder.feature_dim() {
            return Err(Error::ShapeMismatch(format!(
                "head takes {} features, encoder outputs {}",
                self.head.linear.in_dim(),
                self.encoder.feature_dim()
            )));
        }
        Ok(())
    }

    /// Dense per-vertex logits with dropout off.
    pub fn infer_logits(&self, mesh: &SceneMesh) -> Result<Array2<f64>> {
        let indices = SampleIndexSet::full(mesh.vertex_count());
        let features = encoder_forward(&self.encoder, mesh, &indices, false, 0)?;
        Ok(self.head.forward(features.values()))
    }
}

/// Build the per-point input rows for the selected vertices.
pub(super) fn input_features(mesh: &SceneMesh, indices: &SampleIndexSet) -> Result<Array2<f64>> {
    let n = mesh.vertex_count();
    for &i in indices.indices() {
        if i as usize >= n {
            return Err(Error::InvalidArgument(format!(
                "sample index {i} out of range for {n} vertices"
            )));
        }
    }
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| Error::InvalidArgument("empty mesh".into()))?;
    let mut x = Array2::<f64>::zeros((indices.len(), INPUT_DIM));
    for (row, &vi) in indices.indices().iter().enumerate() {
        let p = mesh.vertices[vi as usize];
        for a in 0..3 {
            let extent = hi[a] - lo[a];
            x[[row, a]] = if extent < 1e-12 {
                0.5
            } else {
                (p[a] - lo[a]) / extent
            };
        }
        match &mesh.colors {
            Some(colors) => {
                let rgb = colors[vi as usize];
                for c in 0..3 {
                    x[[row, 3 + c]] = rgb[c] as f64 / 255.0;
                }
            }
            None => {
                for c in 0..3 {
                    x[[row, 3 + c]] = 0.5;
                }
            }
        }
    }
    Ok(x)
}

/// Stored intermediate state of one forward pass, for backpropagation.
pub(super) struct ForwardTrace {
    pub input: Array2<f64>,
    /// Pre-activation outputs of the two hidden layers.
    pub pre_act: [Array2<f64>; 2],
    /// Post-ReLU, post-dropout hidden activations.
    pub hidden: [Array2<f64>; 2],
    /// Dropout multipliers (0 or 1/(1-p)); `None` when dropout was off.
    pub masks: [Option<Array2<f64>>; 2],
    pub features: Array2<f64>,
}

pub(super) fn mlp_forward(
    params: &EncoderParams,
    input: Array2<f64>,
    dropout_on: bool,
    seed: u64,
) -> ForwardTrace {
    let p = params.dropout_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, tag::DROPOUT));
    let mut dropout = |a: &Array2<f64>, _layer: usize| -> (Array2<f64>, Option<Array2<f64>>) {
        if !dropout_on || p == 0.0 {
            (a.clone(), None)
        } else {
            let keep = 1.0 - p;
            let mask = Array2::from_shape_fn(a.raw_dim(), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            (a * &mask, Some(mask))
        }
    };

    let z1 = params.layers[0].forward(&input);
    let a1 = z1.mapv(|v| v.max(0.0));
    let (h1, m1) = dropout(&a1, 0);
    let z2 = params.layers[1].forward(&h1);
    let a2 = z2.mapv(|v| v.max(0.0));
    let (h2, m2) = dropout(&a2, 1);
    let features = params.layers[2].forward(&h2);
    ForwardTrace {
        input,
        pre_act: [z1, z2],
        hidden: [h1, h2],
        masks: [m1, m2],
        features,
    }
}

/// Per-layer parameter gradients.
pub(super) struct ParamGrads {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        ParamGrads {
            weight: params
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            bias: params
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Backpropagate `d_features` through the trace; returns parameter grads.
pub(super) fn mlp_backward(
    params: &EncoderParams,
    trace: &ForwardTrace,
    d_features: &Array2<f64>,
) -> ParamGrads {
    let mut grads = ParamGrads::zeros_like(params);

    // output layer
    grads.weight[2] = trace.hidden[1].t().dot(d_features);
    grads.bias[2] = d_features.sum_axis(ndarray::Axis(0));
    let mut d_hidden = d_features.dot(&params.layers[2].weight.t());

    for layer in (0..2).rev() {
        if let Some(mask) = &trace.masks[layer] {
            d_hidden *= mask;
        }
        // ReLU gate on the pre-activation sign
        ndarray::Zip::from(&mut d_hidden)
            .and(&trace.pre_act[layer])
            .for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        let upstream: &Array2<f64> = if layer == 0 {
            &trace.input
        } else {
            &trace.hidden[layer - 1]
        };
        grads.weight[layer] = upstream.t().dot(&d_hidden);
        grads.bias[layer] = d_hidden.sum_axis(ndarray::Axis(0));
        if layer > 0 {
            d_hidden = d_hidden.dot(&params.layers[layer].weight.t());
        }
    }
    grads
}

/// Encode the selected vertices of a scene. Deterministic given `seed`;
/// with `dropout_on`, hidden activations are masked with inverted dropout.
pub fn encoder_forward(
    params: &EncoderParams,
    mesh: &SceneMesh,
    indices: &SampleIndexSet,
    dropout_on: bool,
    seed: u64,
) -> Result<FeatureMatrix> {
    params.validate()?;
    if dropout_on && params.dropout_rate >= 1.0 {
        return Err(Error::InvalidArgument("dropout rate must be < 1".into()));
    }
    let input = input_features(mesh, indices)?;
    let trace = mlp_forward(params, input, dropout_on, seed);
    FeatureMatrix::new(trace.features)
}

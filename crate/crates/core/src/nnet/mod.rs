//! Small dense networks with hand-written backpropagation.
//!
//! Weights are stored row-major (`out × in`). Dropout masks act on the input
//! of each weight layer with inverted scaling, so a layer with keep
//! probability `p` multiplies kept inputs by `1/p`.

mod checkpoint;
mod optim;
mod pass;

use serde::{Deserialize, Serialize};

use crate::numerics::RngState;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointSidecar, LayerShape,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamVec, OptState};
pub use pass::{
    linearized_pass, log_softmax, mlp_backward, mlp_backward_from_pre, mlp_forward, mlp_predict, softmax,
    weight_grads_from_directions, Backprop, LinearizedPass, Tape,
};

#[derive(Debug, thiserror::Error)]
pub enum NnetError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("non-finite output from network")]
    NonFiniteOutput,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
            Activation::Softmax => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out], activation }
    }

    #[inline]
    pub fn w(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnetError> {
        if layers.is_empty() {
            return Err(NnetError::InvalidArchitecture("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.n_in == 0 || l.n_out == 0 {
                return Err(NnetError::InvalidArchitecture(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(NnetError::InvalidArchitecture(format!("layer {i} storage does not match its shape")));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(NnetError::InvalidArchitecture(format!("softmax on non-final layer {i}")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NnetError::InvalidArchitecture(format!("layer {i} has non-finite entries")));
            }
            if i > 0 && layers[i - 1].n_out != l.n_in {
                return Err(NnetError::InvalidArchitecture(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    l.n_in,
                    i - 1,
                    layers[i - 1].n_out
                )));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with the given widths (`sizes[0]` is the input width).
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self, NnetError> {
        Self::new(layer_specs(sizes, hidden, output)?.map(|(i, o, a)| Layer::zeros(i, o, a)).collect())
    }

    /// Random initialization: He-uniform for relu layers, LeCun-uniform
    /// otherwise; biases start at zero.
    pub fn init(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut RngState) -> Result<Self, NnetError> {
        let layers = layer_specs(sizes, hidden, output)?
            .map(|(n_in, n_out, activation)| {
                let limit = match activation {
                    Activation::Relu => (6.0 / n_in as f64).sqrt(),
                    _ => (3.0 / n_in as f64).sqrt(),
                };
                let weights = (0..n_in * n_out).map(|_| limit * (2.0 * rng.uniform() - 1.0)).collect();
                Layer { n_in, n_out, weights, bias: vec![0.0; n_out], activation }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnetError> {
        if flat.len() != self.param_count() {
            return Err(NnetError::DimensionMismatch {
                context: "set_flat",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out && a.activation == b.activation)
    }

    /// Elementwise mean of several networks with identical shape.
    pub fn mean_of(nets: &[MlpParams]) -> Result<MlpParams, NnetError> {
        let first = nets.first().ok_or_else(|| NnetError::InvalidArchitecture("mean of no networks".into()))?;
        let mut acc = vec![0.0; first.param_count()];
        for n in nets {
            if !n.same_shape(first) {
                return Err(NnetError::InvalidArchitecture("mean of networks with different shapes".into()));
            }
            for (a, v) in acc.iter_mut().zip(n.to_flat()) {
                *a += v;
            }
        }
        let inv = 1.0 / nets.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        let mut out = first.clone();
        out.set_flat(&acc)?;
        Ok(out)
    }
}

fn layer_specs(
    sizes: &[usize],
    hidden: Activation,
    output: Activation,
) -> Result<impl Iterator<Item = (usize, usize, Activation)> + '_, NnetError> {
    if sizes.len() < 2 {
        return Err(NnetError::InvalidArchitecture(format!("need at least two widths, got {sizes:?}")));
    }
    if hidden == Activation::Softmax {
        return Err(NnetError::InvalidArchitecture("softmax hidden activation".into()));
    }
    let last = sizes.len() - 2;
    Ok(sizes
        .windows(2)
        .enumerate()
        .map(move |(i, w)| (w[0], w[1], if i == last { output } else { hidden })))
}

/// Gradients with the same shape as an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += scale * y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| *v == 0.0))
    }
}

/// Per-layer dropout masks on the inputs of each weight layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutMask {
    /// Keep probability for each weight layer; 1.0 disables dropout there.
    pub keep: Vec<f64>,
    /// One 0/1 entry per input unit of each layer.
    pub masks: Vec<Vec<u8>>,
}

impl DropoutMask {
    pub fn sample(params: &MlpParams, keep: &[f64], rng: &mut RngState) -> Result<Self, NnetError> {
        check_keep(params, keep)?;
        let masks = params
            .layers
            .iter()
            .zip(keep)
            .map(|(l, &p)| {
                (0..l.n_in)
                    .map(|_| if p >= 1.0 || rng.uniform() < p { 1 } else { 0 })
                    .collect()
            })
            .collect();
        Ok(Self { keep: keep.to_vec(), masks })
    }

    pub fn all_keep(params: &MlpParams, keep: &[f64]) -> Result<Self, NnetError> {
        check_keep(params, keep)?;
        Ok(Self { keep: keep.to_vec(), masks: params.layers.iter().map(|l| vec![1; l.n_in]).collect() })
    }

    pub fn matches(&self, params: &MlpParams) -> bool {
        self.keep.len() == params.n_layers()
            && self.masks.len() == params.n_layers()
            && self.masks.iter().zip(params.layers()).all(|(m, l)| m.len() == l.n_in)
    }

    /// Multipliers applied to the raw input of `layer`, or `None` when the
    /// layer has no dropout.
    pub fn scales(&self, layer: usize) -> Option<Vec<f64>> {
        let p = self.keep[layer];
        if p >= 1.0 {
            return None;
        }
        Some(self.masks[layer].iter().map(|&z| if z == 1 { 1.0 / p } else { 0.0 }).collect())
    }

    pub fn kept_fraction(&self, layer: usize) -> f64 {
        let m = &self.masks[layer];
        m.iter().map(|&z| z as f64).sum::<f64>() / m.len() as f64
    }
}

fn check_keep(params: &MlpParams, keep: &[f64]) -> Result<(), NnetError> {
    if keep.len() != params.n_layers() {
        return Err(NnetError::DimensionMismatch {
            context: "dropout keep probabilities",
            expected: params.n_layers(),
            got: keep.len(),
        });
    }
    if keep.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(NnetError::InvalidArchitecture(format!("keep probabilities must lie in (0, 1]: {keep:?}")));
    }
    Ok(())
}

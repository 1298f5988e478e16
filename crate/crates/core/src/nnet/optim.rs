use serde::{Deserialize, Serialize};

use super::{MlpGrads, MlpParams, NnetError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-3)
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &AdamConfig, t: u64) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone)]
pub struct OptState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: MlpGrads,
    v: MlpGrads,
}

impl OptState {
    pub fn new(params: &MlpParams, cfg: AdamConfig) -> Self {
        Self { cfg, step: 0, m: MlpGrads::zeros_like(params), v: MlpGrads::zeros_like(params) }
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut OptState) -> Result<(), NnetError> {
    check_grads(params, grads)?;
    if state.m.layers.len() != grads.layers.len() {
        return Err(NnetError::InvalidArchitecture("optimizer state does not match the network".into()));
    }
    state.step += 1;
    let t = state.step;
    for (i, layer) in params.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[i];
        let m = &mut state.m.layers[i];
        let v = &mut state.v.layers[i];
        adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, &state.cfg, t);
        adam_update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, &state.cfg, t);
    }
    Ok(())
}

pub fn sgd_step(params: &mut MlpParams, grads: &MlpGrads, lr: f64) -> Result<(), NnetError> {
    check_grads(params, grads)?;
    for (layer, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
        layer.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= lr * d);
        layer.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= lr * d);
    }
    Ok(())
}

fn check_grads(params: &MlpParams, grads: &MlpGrads) -> Result<(), NnetError> {
    if grads.layers.len() != params.n_layers()
        || grads
            .layers
            .iter()
            .zip(params.layers())
            .any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
    {
        return Err(NnetError::InvalidArchitecture("gradient shape does not match the network".into()));
    }
    if let Some(layer) = grads.first_non_finite_layer() {
        return Err(NnetError::NonFiniteGradient { layer });
    }
    Ok(())
}

/// Adam on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamVec {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamVec {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Self { cfg, step: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnetError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnetError::DimensionMismatch { context: "AdamVec", expected: self.m.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnetError::NonFiniteGradient { layer: 0 });
        }
        self.step += 1;
        adam_update(params, grads, &mut self.m, &mut self.v, &self.cfg, self.step);
        Ok(())
    }
}

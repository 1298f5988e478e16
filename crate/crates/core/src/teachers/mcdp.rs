//! Monte Carlo dropout: train shared weights M with dropout, then treat
//! random masks Θ_i = M_i diag(z_i) as posterior samples.

use serde::{Deserialize, Serialize};

use super::sgld::{check_arch, DIVERGENCE_FACTOR, DIVERGENCE_PATIENCE};
use super::{PosteriorSampleSet, PosteriorSamples, Provenance, TeacherError};
use crate::data::Dataset;
use crate::nnet::{log_softmax, mlp_backward_from_pre, mlp_forward, sgd_step, Activation, DropoutMask, MlpGrads, MlpParams};
use crate::numerics::RngState;

/// Dropout placement. `rate` is the drop probability; masks keep each unit
/// with probability `1 − rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McdpDropout {
    pub rate: f64,
    /// Also drop raw input features, not only hidden units.
    #[serde(default)]
    pub input: bool,
}

impl McdpDropout {
    pub fn keep_probs(&self, n_layers: usize) -> Vec<f64> {
        (0..n_layers)
            .map(|i| if i == 0 && !self.input { 1.0 } else { 1.0 - self.rate })
            .collect()
    }

    fn validate(&self) -> Result<(), TeacherError> {
        if self.rate > 0.0 && self.rate < 1.0 {
            Ok(())
        } else {
            Err(TeacherError::Config(format!("dropout rate must lie in (0, 1), got {}", self.rate)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McdpConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

/// Minibatch SGD on cross-entropy with a fresh mask for every example.
pub fn mcdp_train(
    data: &Dataset,
    arch: &[usize],
    dropout: McdpDropout,
    cfg: &McdpConfig,
    rng: &mut RngState,
) -> Result<MlpParams, TeacherError> {
    dropout.validate()?;
    check_arch(data, arch)?;
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || cfg.weight_decay < 0.0 {
        return Err(TeacherError::Config("batch_size ≥ 1, lr > 0 and weight_decay ≥ 0 required".into()));
    }
    let labels = data.labels()?;
    let mut net = MlpParams::init(arch, Activation::Relu, Activation::Softmax, rng)?;
    let keep = dropout.keep_probs(net.n_layers());
    let mut initial = None;
    let mut over = 0usize;
    for step in 0..cfg.steps {
        let mut grads = MlpGrads::zeros_like(&net);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let i = rng.below(data.len());
            let mask = DropoutMask::sample(&net, &keep, rng)?;
            let (y, tape) = mlp_forward(&net, &data.features[i], Some(&mask))?;
            loss -= log_softmax(tape.logits())[labels[i]];
            let delta: Vec<f64> = y.iter().enumerate().map(|(k, p)| p - f64::from(u8::from(k == labels[i]))).collect();
            grads.add_scaled(&mlp_backward_from_pre(&net, &tape, &delta)?.grads, 1.0);
        }
        let inv = 1.0 / cfg.batch_size as f64;
        grads.scale(inv);
        loss *= inv;
        if cfg.weight_decay > 0.0 {
            for (g, l) in grads.layers.iter_mut().zip(net.layers()) {
                g.weights.iter_mut().zip(&l.weights).for_each(|(g, w)| *g += cfg.weight_decay * w);
            }
        }
        let init = *initial.get_or_insert(loss);
        if loss > DIVERGENCE_FACTOR * init {
            over += 1;
            if over >= DIVERGENCE_PATIENCE {
                return Err(TeacherError::Diverged { step, loss, initial: init, factor: DIVERGENCE_FACTOR, patience: DIVERGENCE_PATIENCE });
            }
        } else {
            over = 0;
        }
        sgd_step(&mut net, &grads, cfg.lr)?;
    }
    Ok(net)
}

/// S independent dropout masks over the shared weights.
pub fn mcdp_sample(shared: &MlpParams, dropout: McdpDropout, s: usize, rng: &mut RngState) -> Result<PosteriorSampleSet, TeacherError> {
    dropout.validate()?;
    if s == 0 {
        return Err(TeacherError::Config("S must be at least 1".into()));
    }
    let keep = dropout.keep_probs(shared.n_layers());
    let masks = (0..s).map(|_| DropoutMask::sample(shared, &keep, rng)).collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorSampleSet {
        samples: PosteriorSamples::Mcdp { shared: shared.clone(), masks },
        provenance: Provenance { burn_in: 0, thinning: 1, seed: rng.seed() },
    })
}

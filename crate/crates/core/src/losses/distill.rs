//! Outer distillation loop: pick inputs uniformly from D′ and dispatch to
//! the configured objective.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kl::kl_loss_grads;
use super::mmd::mmd_loss_grads;
use super::{
    alternating_update, emd_step, median_heuristic, mmd2_self_term, CriticModel, CriticOpt, EmdConfig, KernelSpec,
    LossError, LossKind, StudentOpt,
};
use crate::nnet::AdamConfig;
use crate::numerics::RngState;
use crate::student::{StudentGrads, StudentModel};
use crate::teachers::ParticleCloud;

fn default_samples() -> usize {
    64
}
fn default_one() -> usize {
    1
}
fn default_lambda() -> f64 {
    10.0
}
fn default_critic_steps() -> usize {
    5
}
fn default_critic_hidden() -> usize {
    32
}
fn default_critic_optimizer() -> AdamConfig {
    AdamConfig { lr: 1e-3, beta1: 0.5, beta2: 0.9, eps: 1e-8 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub loss: LossKind,
    /// Outer steps.
    pub steps: usize,
    /// Student samples per evaluation (S′).
    #[serde(default = "default_samples")]
    pub student_samples: usize,
    /// Inputs per step; per-input losses are averaged. EMD requires 1.
    #[serde(default = "default_one")]
    pub input_batch: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// T_stu.
    #[serde(default = "default_one")]
    pub student_steps: usize,
    /// T_wit.
    #[serde(default = "default_critic_steps")]
    pub critic_steps: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_critic_optimizer")]
    pub critic_optimizer: AdamConfig,
    #[serde(default = "default_critic_hidden")]
    pub critic_hidden: usize,
    /// MMD kernel; median-heuristic RBF plus polynomial when absent.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl DistillConfig {
    pub fn new(loss: LossKind, steps: usize, seed: u64) -> Self {
        Self {
            loss,
            steps,
            student_samples: default_samples(),
            input_batch: 1,
            lambda: default_lambda(),
            student_steps: 1,
            critic_steps: default_critic_steps(),
            optimizer: AdamConfig::default(),
            critic_optimizer: default_critic_optimizer(),
            critic_hidden: default_critic_hidden(),
            kernel: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: &str| Err(LossError::Config(m.into()));
        if self.loss != LossKind::Kl && self.student_samples < 2 {
            return bad("student_samples must be at least 2");
        }
        if self.input_batch == 0 || self.student_steps == 0 || self.critic_steps == 0 {
            return bad("input_batch, student_steps and critic_steps must be at least 1");
        }
        if self.loss == LossKind::Emd && self.input_batch != 1 {
            return bad("emd distillation takes one input per step");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.optimizer.lr > 0.0 && self.critic_optimizer.lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }

    pub fn emd(&self) -> EmdConfig {
        EmdConfig {
            samples: self.student_samples,
            lambda: self.lambda,
            student_steps: self.student_steps,
            critic_steps: self.critic_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub input_id: usize,
    pub loss_kind: LossKind,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub model: StudentModel,
    pub trace: Vec<TraceRecord>,
    /// Kernel actually used (MMD only).
    pub kernel: Option<KernelSpec>,
    pub critic: Option<CriticModel>,
}

fn batch_grads<F>(m: &StudentModel, batch: &[usize], mut one: F) -> Result<(f64, StudentGrads), LossError>
where
    F: FnMut(&StudentModel, usize) -> Result<(f64, StudentGrads), LossError>,
{
    let scale = 1.0 / batch.len() as f64;
    let (mut loss, mut grads) = one(m, batch[0])?;
    grads.pm.scale(scale);
    grads.cm.scale(scale);
    loss *= scale;
    for &i in &batch[1..] {
        let (l, g) = one(m, i)?;
        loss += scale * l;
        grads.pm.add_scaled(&g.pm, scale);
        grads.cm.add_scaled(&g.cm, scale);
    }
    Ok((loss, grads))
}

/// Trains `m` on the clouds of D′ (cloud `i` belongs to `features[i]`).
pub fn distill(
    mut m: StudentModel,
    features: &[Vec<f64>],
    clouds: &[ParticleCloud],
    cfg: &DistillConfig,
) -> Result<DistillOutput, LossError> {
    cfg.validate()?;
    if features.len() != clouds.len() || clouds.is_empty() {
        return Err(LossError::Config(format!("{} inputs but {} clouds", features.len(), clouds.len())));
    }
    if clouds.iter().any(|c| c.k() != m.k()) {
        return Err(LossError::Config(format!("clouds do not all have K = {}", m.k())));
    }
    let root = RngState::new(cfg.seed);
    let mut pick = root.split(0);
    let mut rng = root.split(1);
    let mut opt = StudentOpt::new(&m, cfg.optimizer);
    let mut critic = match cfg.loss {
        LossKind::Emd => {
            let c = CriticModel::init(m.input_dim(), m.k(), cfg.critic_hidden, &mut root.split(2))?;
            let o = CriticOpt::new(&c, cfg.critic_optimizer);
            Some((c, o))
        }
        _ => None,
    };
    let mut kernel = cfg.kernel.clone();
    let mut pp_cache: Vec<Option<f64>> = vec![None; clouds.len()];
    let emd_cfg = cfg.emd();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let start = Instant::now();
        let batch: Vec<usize> = (0..cfg.input_batch).map(|_| pick.below(clouds.len())).collect();
        let ctx = |e: LossError| LossError::Step { step, input_id: clouds[batch[0]].input_id, source: Box::new(e) };
        let loss = match cfg.loss {
            LossKind::Kl => alternating_update(&mut m, &mut opt, |m| {
                batch_grads(m, &batch, |m, i| kl_loss_grads(m, &features[i], &clouds[i]))
            })
            .map_err(ctx)?,
            LossKind::Mmd => {
                let k = kernel.get_or_insert_with(|| {
                    let pooled: Vec<&[f64]> =
                        batch.iter().flat_map(|&i| clouds[i].points.iter().map(|p| p.probs())).collect();
                    KernelSpec::rbf_plus_poly(median_heuristic(&pooled)).expect("median heuristic is positive")
                });
                for &i in &batch {
                    if pp_cache[i].is_none() {
                        pp_cache[i] = Some(mmd2_self_term(&clouds[i].points, k));
                    }
                }
                let (k, pp, s) = (&*k, &pp_cache, cfg.student_samples);
                alternating_update(&mut m, &mut opt, |m| {
                    batch_grads(m, &batch, |m, i| mmd_loss_grads(m, &features[i], &clouds[i], k, s, pp[i], &mut rng))
                })
                .map_err(ctx)?
            }
            LossKind::Emd => {
                let (c, oc) = critic.as_mut().expect("critic exists for emd");
                let i = batch[0];
                emd_step(&mut m, c, &features[i], &clouds[i], &emd_cfg, &mut opt, oc, &mut rng).map_err(ctx)?
            }
        };
        trace.push(TraceRecord {
            step,
            input_id: clouds[batch[0]].input_id,
            loss_kind: cfg.loss,
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(DistillOutput { model: m, trace, kernel, critic: critic.map(|(c, _)| c) })
}

/// One JSON object per line.
pub fn write_loss_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), LossError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in trace {
        serde_json::to_writer(&mut out, r).map_err(|e| LossError::Config(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

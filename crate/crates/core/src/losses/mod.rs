//! Distillation objectives (forward KL, MMD, EMD) and the training driver.

mod critic;
mod distill;
mod emd;
mod kernel;
mod kl;
mod mmd;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::nnet::{adam_step, AdamConfig, NnetError, OptState};
use crate::numerics::NumericsError;
use crate::student::{StudentError, StudentGrads, StudentModel};

pub use critic::{critic_forward, critic_grad_pi, gradient_penalty, CriticGrads, CriticModel, CriticOpt, PenaltyPairs};
pub use distill::{distill, write_loss_trace, DistillConfig, DistillOutput, TraceRecord};
pub use emd::{critic_objective_grads, emd_step, emd_student_grads, EmdConfig};
pub use kernel::{median_heuristic, KernelComponent, KernelKind, KernelSpec};
pub use kl::{kl_loss, kl_loss_grads, kl_step};
pub use mmd::{mmd2_estimate, mmd2_grad_q, mmd2_self_term, mmd_alpha_grad, mmd_loss_grads, mmd_step, MmdGrad};
pub use sampling::{ReparamSamples, DEGENERATE_RETRIES};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("invalid loss configuration: {0}")]
    Config(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("implicit gradient hit a degenerate density after {retries} redraws")]
    Degenerate { retries: usize },
    #[error("step {step}, input {input_id}: {source}")]
    Step { step: usize, input_id: usize, source: Box<LossError> },
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Kl,
    Mmd,
    Emd,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Kl => "kl",
            LossKind::Mmd => "mmd",
            LossKind::Emd => "emd",
        }
    }
}

/// Adam state for the prediction and concentration models.
#[derive(Debug, Clone)]
pub struct StudentOpt {
    pub pm: OptState,
    pub cm: OptState,
}

impl StudentOpt {
    pub fn new(m: &StudentModel, cfg: AdamConfig) -> Self {
        Self { pm: OptState::new(&m.pm, cfg), cm: OptState::new(&m.cm, cfg) }
    }
}

/// Updates φ₁ (prediction model) from one evaluation, then re-evaluates and
/// updates φ₂ (concentration model). Returns the first evaluation's loss.
pub(crate) fn alternating_update<F>(m: &mut StudentModel, opt: &mut StudentOpt, mut eval: F) -> Result<f64, LossError>
where
    F: FnMut(&StudentModel) -> Result<(f64, StudentGrads), LossError>,
{
    let (loss, g) = eval(m)?;
    if !loss.is_finite() {
        return Err(LossError::NonFinite { context: "student loss".into() });
    }
    adam_step(&mut m.pm, &g.pm, &mut opt.pm)?;
    let (_, g) = eval(m)?;
    adam_step(&mut m.cm, &g.cm, &mut opt.cm)?;
    Ok(loss)
}

//! Adversarial EMD distillation. The critic minimizes
//! mean_q ψ − mean_p ψ + λR; the student minimizes −mean_q ψ over its own
//! reparameterized samples.

use serde::{Deserialize, Serialize};

use super::critic::{accumulate_value_grads, critic_forward_ctx, critic_grads_pi, penalty_with_grads};
use super::{alternating_update, CriticGrads, CriticModel, CriticOpt, LossError, PenaltyPairs, ReparamSamples, StudentOpt};
use crate::numerics::{sample_dirichlet, DirichletParams, RngState};
use crate::student::{student_alpha, student_backward, student_forward, StudentGrads, StudentModel};
use crate::teachers::ParticleCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    /// Student samples per evaluation (S′).
    pub samples: usize,
    /// Gradient-penalty weight λ.
    pub lambda: f64,
    /// Student updates per outer step (T_stu).
    pub student_steps: usize,
    /// Critic updates per outer step (T_wit).
    pub critic_steps: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self { samples: 64, lambda: 10.0, student_steps: 1, critic_steps: 5 }
    }
}

/// Student loss −mean_s ψ(π_s) over fresh reparameterized samples, with
/// gradients for both student nets.
pub fn emd_student_grads(
    m: &StudentModel,
    c: &CriticModel,
    x: &[f64],
    samples: usize,
    rng: &mut RngState,
) -> Result<(f64, StudentGrads), LossError> {
    let pass = student_forward(m, x)?;
    let alpha = DirichletParams::new(pass.alpha.clone())?;
    let draws = ReparamSamples::draw(&alpha, samples, rng)?;
    let ctx = c.context(x)?;
    let points = draws.points();
    let n = points.len() as f64;
    let mut loss = 0.0;
    for p in &points {
        loss -= critic_forward_ctx(c, &ctx, p)? / n;
    }
    let grad_pi: Vec<Vec<f64>> =
        critic_grads_pi(c, &ctx, &points)?.into_iter().map(|g| g.into_iter().map(|v| -v / n).collect()).collect();
    let d_alpha = draws.pullback(&grad_pi);
    if !loss.is_finite() || d_alpha.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite { context: "EMD student loss".into() });
    }
    Ok((loss, student_backward(m, &pass, &d_alpha)?))
}

/// Critic loss mean_q ψ − mean_p ψ + λR with its weight gradients; also
/// returns the reported objective mean_p ψ − mean_q ψ.
pub fn critic_objective_grads<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    c: &CriticModel,
    x: &[f64],
    p: &[P],
    q: &[Q],
    lambda: f64,
    pairs: &PenaltyPairs,
) -> Result<(f64, f64, CriticGrads), LossError> {
    let ctx = c.context(x)?;
    let mut g = CriticGrads::zeros_like(c);
    let sum_q = accumulate_value_grads(c, &ctx, q, 1.0 / q.len() as f64, &mut g)?;
    let sum_p = accumulate_value_grads(c, &ctx, p, -1.0 / p.len() as f64, &mut g)?;
    let r = penalty_with_grads(c, &ctx, &pairs.points(p, q), lambda, Some(&mut g))?;
    let objective = sum_p / p.len() as f64 - sum_q / q.len() as f64;
    let loss = -objective + lambda * r;
    if !loss.is_finite() {
        return Err(LossError::NonFinite { context: "critic objective".into() });
    }
    Ok((loss, objective, g))
}

/// T_stu alternating student updates, then T_wit critic updates against
/// fresh student samples. Returns the last critic objective.
#[allow(clippy::too_many_arguments)]
pub fn emd_step(
    m: &mut StudentModel,
    c: &mut CriticModel,
    x: &[f64],
    cloud: &ParticleCloud,
    cfg: &EmdConfig,
    opt_m: &mut StudentOpt,
    opt_c: &mut CriticOpt,
    rng: &mut RngState,
) -> Result<f64, LossError> {
    if cloud.k() != m.k() || c.k() != m.k() {
        return Err(LossError::Config(format!("cloud K = {}, student K = {}, critic K = {}", cloud.k(), m.k(), c.k())));
    }
    for _ in 0..cfg.student_steps {
        alternating_update(m, opt_m, |m| emd_student_grads(m, c, x, cfg.samples, rng))?;
    }
    let mut objective = f64::NAN;
    for _ in 0..cfg.critic_steps {
        let alpha = student_alpha(m, x)?;
        let q = (0..cfg.samples).map(|_| sample_dirichlet(&alpha, rng)).collect::<Result<Vec<_>, _>>()?;
        let n = cloud.len().max(q.len());
        let pairs = PenaltyPairs::sample(cloud.len(), q.len(), n, rng);
        let (_, obj, g) = critic_objective_grads(c, x, &cloud.points, &q, cfg.lambda, &pairs)?;
        opt_c.step(c, &g)?;
        objective = obj;
    }
    Ok(objective)
}

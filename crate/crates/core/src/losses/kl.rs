//! Forward KL to the particle cloud: −(1/S) Σ_s ln Dir(π_s | α(x)).

use super::{alternating_update, LossError, StudentOpt};
use crate::numerics::special::digamma_unchecked;
use crate::numerics::DirichletParams;
use crate::student::{dirichlet_log_pdf, student_backward, student_forward, StudentGrads, StudentModel};
use crate::teachers::ParticleCloud;

pub fn kl_loss(alpha: &DirichletParams, cloud: &ParticleCloud) -> Result<f64, LossError> {
    let mut s = 0.0;
    for p in &cloud.points {
        s += dirichlet_log_pdf(alpha, p)?;
    }
    Ok(-s / cloud.len() as f64)
}

/// ∂L/∂α_k = ψ(α_k) − ψ(α₀) − mean_s ln π_{s,k}.
fn kl_alpha_grad(alpha: &DirichletParams, cloud: &ParticleCloud) -> Vec<f64> {
    let n = cloud.len() as f64;
    let mut mean_log = vec![0.0; alpha.k()];
    for p in &cloud.points {
        mean_log.iter_mut().zip(p.probs()).for_each(|(m, v)| *m += v.ln() / n);
    }
    let psi0 = digamma_unchecked(alpha.precision());
    alpha.alpha().iter().zip(&mean_log).map(|(&a, l)| digamma_unchecked(a) - psi0 - l).collect()
}

pub fn kl_loss_grads(m: &StudentModel, x: &[f64], cloud: &ParticleCloud) -> Result<(f64, StudentGrads), LossError> {
    if cloud.k() != m.k() {
        return Err(LossError::Config(format!("cloud K = {}, student K = {}", cloud.k(), m.k())));
    }
    let pass = student_forward(m, x)?;
    let alpha = pass.dirichlet()?;
    let loss = kl_loss(&alpha, cloud)?;
    let grads = student_backward(m, &pass, &kl_alpha_grad(&alpha, cloud))?;
    Ok((loss, grads))
}

/// One alternating KL update at a single input; returns the loss before it.
pub fn kl_step(m: &mut StudentModel, x: &[f64], cloud: &ParticleCloud, opt: &mut StudentOpt) -> Result<f64, LossError> {
    alternating_update(m, opt, |m| kl_loss_grads(m, x, cloud))
}

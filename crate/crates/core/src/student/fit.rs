//! Per-input Dirichlet fits to a particle cloud: the KL (maximum
//! likelihood) projection and the MMD projection.

use serde::{Deserialize, Serialize};

use super::StudentError;
use crate::losses::{mmd2_grad_q, mmd2_self_term, KernelSpec, LossError, ReparamSamples};
use crate::nnet::{AdamConfig, AdamVec};
use crate::numerics::special::digamma_unchecked;
use crate::numerics::{inv_digamma, DirichletParams, RngState, SimplexPoint};
use crate::teachers::ParticleCloud;

pub const MLE_MAX_ITERATIONS: usize = 500;
pub const MLE_REL_TOL: f64 = 1e-10;

const MAX_PRECISION: f64 = 1e6;
const MIN_PRECISION: f64 = 1e-2;
const MIN_ALPHA: f64 = 1e-3;

/// Sum in a canonical order so class permutations give identical bits.
fn sorted_sum(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

fn check_points(points: &[SimplexPoint]) -> Result<usize, StudentError> {
    let k = points.first().ok_or_else(|| StudentError::Config("empty particle set".into()))?.k();
    if points.len() < k {
        return Err(StudentError::Config(format!("{} particles cannot determine K = {k} parameters", points.len())));
    }
    for p in points {
        if p.k() != k {
            return Err(StudentError::Config("particles differ in K".into()));
        }
        if let Some((j, &v)) = p.probs().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(StudentError::Boundary { k: j, value: v });
        }
    }
    Ok(k)
}

/// Method-of-moments estimate: mean m and precision averaged from
/// m_k(1 − m_k)/var_k − 1, capped to [1e-2, 1e6].
pub fn dirichlet_moments(points: &[SimplexPoint]) -> Result<DirichletParams, StudentError> {
    let k = check_points(points)?;
    let n = points.len() as f64;
    let mut mean = vec![0.0; k];
    for p in points {
        mean.iter_mut().zip(p.probs()).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; k];
    for p in points {
        var.iter_mut().zip(p.probs().iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    let est: Vec<f64> = mean
        .iter()
        .zip(&var)
        .map(|(m, v)| if *v > 0.0 { (m * (1.0 - m) / v - 1.0).min(MAX_PRECISION) } else { MAX_PRECISION })
        .collect();
    let precision = (sorted_sum(&est) / k as f64).clamp(MIN_PRECISION, MAX_PRECISION);
    Ok(DirichletParams::new(mean.iter().map(|m| (m * precision).max(MIN_ALPHA)).collect())?)
}

/// Maximum-likelihood Dirichlet by the fixed point
/// α_k ← ψ⁻¹(ψ(α₀) + mean_s ln π_{s,k}), started from the moment estimate.
pub fn fit_dirichlet_mle_points(points: &[SimplexPoint]) -> Result<DirichletParams, StudentError> {
    let k = check_points(points)?;
    let n = points.len() as f64;
    let mut mean_log = vec![0.0; k];
    for p in points {
        mean_log.iter_mut().zip(p.probs()).for_each(|(m, v)| *m += v.ln() / n);
    }
    let mut alpha = dirichlet_moments(points)?.into_vec();
    for _ in 0..MLE_MAX_ITERATIONS {
        let psi0 = digamma_unchecked(sorted_sum(&alpha));
        let next: Vec<f64> = mean_log.iter().map(|l| inv_digamma(psi0 + l)).collect();
        if next.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(StudentError::NonFinite);
        }
        let change = next.iter().zip(&alpha).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        alpha = next;
        if change < MLE_REL_TOL {
            return Ok(DirichletParams::new(alpha)?);
        }
    }
    Err(StudentError::NoConvergence { last: DirichletParams::new(alpha)?, iterations: MLE_MAX_ITERATIONS })
}

pub fn fit_dirichlet_mle(cloud: &ParticleCloud) -> Result<DirichletParams, StudentError> {
    fit_dirichlet_mle_points(&cloud.points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdFitConfig {
    pub steps: usize,
    /// Dirichlet samples drawn per step (S′).
    pub samples: usize,
    pub lr: f64,
    /// Starting point; the moment estimate when absent.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
}

impl Default for MmdFitConfig {
    fn default() -> Self {
        Self { steps: 300, samples: 64, lr: 0.05, init: None }
    }
}

#[derive(Debug, Clone)]
pub struct MmdFit {
    pub alpha: DirichletParams,
    /// MMD² estimate at the returned iterate.
    pub loss: f64,
    /// MMD² estimate per step.
    pub trace: Vec<f64>,
}

fn loss_err(e: LossError) -> StudentError {
    match e {
        LossError::NonFinite { .. } => StudentError::NonFinite,
        other => StudentError::Config(other.to_string()),
    }
}

/// Minimizes MMD² between the cloud and Dir(α) with Adam on ln α, using
/// reparameterized sample gradients; returns the lowest-loss iterate.
pub fn fit_dirichlet_mmd(
    cloud: &ParticleCloud,
    kernel: &KernelSpec,
    cfg: &MmdFitConfig,
    rng: &mut RngState,
) -> Result<MmdFit, StudentError> {
    let k = check_points(&cloud.points)?;
    if cfg.samples < 2 || cfg.steps == 0 {
        return Err(StudentError::Config("MMD fit needs at least 2 samples and 1 step".into()));
    }
    let init = match &cfg.init {
        Some(a) if a.len() == k => DirichletParams::new(a.clone())?,
        Some(a) => return Err(StudentError::Config(format!("initial α has {} entries, cloud K = {k}", a.len()))),
        None => dirichlet_moments(&cloud.points)?,
    };
    let pp = mmd2_self_term(&cloud.points, kernel);
    let mut theta: Vec<f64> = init.alpha().iter().map(|a| a.ln()).collect();
    let mut opt = AdamVec::new(k, AdamConfig::with_lr(cfg.lr));
    let (lo, hi) = (MIN_ALPHA.ln(), MAX_PRECISION.ln());
    let mut best: Option<(f64, DirichletParams)> = None;
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let alpha = DirichletParams::new(theta.iter().map(|t| t.exp()).collect())?;
        let samples = ReparamSamples::draw(&alpha, cfg.samples, rng).map_err(loss_err)?;
        let g = mmd2_grad_q(&cloud.points, &samples.points(), kernel, Some(pp)).map_err(loss_err)?;
        trace.push(g.loss);
        if best.as_ref().is_none_or(|(l, _)| g.loss < *l) {
            best = Some((g.loss, alpha.clone()));
        }
        let d_alpha = samples.pullback(&g.grad_q);
        let d_theta: Vec<f64> = d_alpha.iter().zip(alpha.alpha()).map(|(d, a)| d * a).collect();
        if d_theta.iter().any(|v| !v.is_finite()) {
            return Err(StudentError::NonFinite);
        }
        opt.step(&mut theta, &d_theta)?;
        theta.iter_mut().for_each(|t| *t = t.clamp(lo, hi));
    }
    let (loss, alpha) = best.expect("at least one step");
    Ok(MmdFit { alpha, loss, trace })
}

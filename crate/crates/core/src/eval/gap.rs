//! Local amortization gap Δ(x) = MMD(q_x, p_x) − MMD(q̄*_x, p_x), with q̄*_x
//! the per-input MMD fit.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::losses::{mmd2_estimate, KernelSpec, LossError};
use crate::numerics::{sample_dirichlet, DirichletParams, RngState};
use crate::student::{fit_dirichlet_mmd, student_alpha, MmdFitConfig, StudentModel};
use crate::teachers::ParticleCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// Dirichlet samples per MMD evaluation.
    pub samples: usize,
    /// Reseeded evaluations behind the estimate and its noise bound.
    pub repetitions: usize,
    pub fit: MmdFitConfig,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { samples: 128, repetitions: 10, fit: MmdFitConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub input_id: usize,
    /// Mean over repetitions of sqrt⁺(MMD²(q_x)) − sqrt⁺(MMD²(q̄*_x)).
    pub delta: f64,
    pub mmd_student: f64,
    pub mmd_fit: f64,
    /// Standard deviation of a single-repetition Δ̂.
    pub noise_bound: f64,
    /// True when some raw MMD² estimate was negative before clipping.
    pub clipped_negative: bool,
    pub fit_alpha: Vec<f64>,
}

fn mmd_of(alpha: &DirichletParams, cloud: &ParticleCloud, k: &KernelSpec, n: usize, rng: &mut RngState) -> Result<f64, EvalError> {
    let q = (0..n).map(|_| sample_dirichlet(alpha, rng)).collect::<Result<Vec<_>, _>>().map_err(LossError::from)?;
    Ok(mmd2_estimate(&cloud.points, &q, k)?)
}

/// Gap against a given local fit `fit_alpha`.
pub fn gap_against(
    m: &StudentModel,
    x: &[f64],
    cloud: &ParticleCloud,
    k: &KernelSpec,
    fit_alpha: &DirichletParams,
    cfg: &GapConfig,
    rng: &mut RngState,
) -> Result<GapReport, EvalError> {
    if cfg.repetitions < 2 || cfg.samples < 2 {
        return Err(EvalError::Config("gap needs at least 2 repetitions and 2 samples".into()));
    }
    let student = student_alpha(m, x)?;
    let (mut deltas, mut s_terms, mut f_terms) = (Vec::new(), Vec::new(), Vec::new());
    let mut clipped = false;
    for _ in 0..cfg.repetitions {
        let a = mmd_of(&student, cloud, k, cfg.samples, rng)?;
        let b = mmd_of(fit_alpha, cloud, k, cfg.samples, rng)?;
        clipped |= a < 0.0 || b < 0.0;
        let (sa, sb) = (a.max(0.0).sqrt(), b.max(0.0).sqrt());
        s_terms.push(sa);
        f_terms.push(sb);
        deltas.push(sa - sb);
    }
    let n = cfg.repetitions as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let delta = mean(&deltas);
    let noise = (deltas.iter().map(|d| (d - delta).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(GapReport {
        input_id: cloud.input_id,
        delta,
        mmd_student: mean(&s_terms),
        mmd_fit: mean(&f_terms),
        noise_bound: noise,
        clipped_negative: clipped,
        fit_alpha: fit_alpha.alpha().to_vec(),
    })
}

/// Fits q̄*_x by MMD, then measures the gap.
pub fn amortization_gap(
    m: &StudentModel,
    x: &[f64],
    cloud: &ParticleCloud,
    k: &KernelSpec,
    cfg: &GapConfig,
    rng: &mut RngState,
) -> Result<GapReport, EvalError> {
    let fit = fit_dirichlet_mmd(cloud, k, &cfg.fit, rng)?;
    gap_against(m, x, cloud, k, &fit.alpha, cfg, rng)
}

//! Stochastic gradient Langevin dynamics.
//!
//! θ ← θ + ε_t (∇log p(θ) + (N/B) Σ_b ∇log p(y_b | x_b, θ)) + η_t,
//! η_t ~ N(0, 2ε_t I).

use serde::{Deserialize, Serialize};

use super::{PosteriorSampleSet, PosteriorSamples, Provenance, TeacherError};
use crate::data::Dataset;
use crate::nnet::{log_softmax, mlp_backward_from_pre, mlp_forward, Activation, MlpParams};
use crate::numerics::RngState;

/// Loss multiple that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Consecutive diverged steps before giving up.
pub const DIVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { eps: f64 },
    /// ε_t = a (b + t)^(−gamma)
    Polynomial { a: f64, b: f64, gamma: f64 },
}

impl StepSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eps } => eps,
            StepSchedule::Polynomial { a, b, gamma } => a * (b + t as f64).powf(-gamma),
        }
    }

    fn validate(&self) -> Result<(), TeacherError> {
        let ok = match *self {
            StepSchedule::Constant { eps } => eps >= 0.0 && eps.is_finite(),
            StepSchedule::Polynomial { a, b, gamma } => a >= 0.0 && b > 0.0 && gamma >= 0.0 && a.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(TeacherError::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldConfig {
    pub step: StepSchedule,
    pub batch_size: usize,
    pub burn_in: usize,
    pub samples: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Precision of the isotropic Gaussian prior on all parameters.
    pub prior_precision: f64,
}

fn one() -> usize {
    1
}

/// A log posterior known through its gradient.
pub trait GradientTarget {
    fn dim(&self) -> usize;
    fn n_data(&self) -> usize;
    /// Adds ∇log p(θ) to `grad`.
    fn add_grad_log_prior(&self, theta: &[f64], grad: &mut [f64]);
    /// Adds Σ_b ∇log p(y_b | x_b, θ) to `grad` and returns Σ_b log p(y_b | x_b, θ).
    fn add_grad_log_lik(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64, TeacherError>;
}

/// Runs the chain from `theta0` and returns the kept iterates.
pub fn sgld_run<T: GradientTarget>(
    target: &T,
    theta0: Vec<f64>,
    cfg: &SgldConfig,
    rng: &mut RngState,
) -> Result<Vec<Vec<f64>>, TeacherError> {
    cfg.step.validate()?;
    if cfg.batch_size == 0 || cfg.thin == 0 || cfg.samples == 0 {
        return Err(TeacherError::Config("batch_size, thin and samples must be at least 1".into()));
    }
    if theta0.len() != target.dim() {
        return Err(TeacherError::DimensionMismatch { expected: target.dim(), got: theta0.len() });
    }
    let n = target.n_data();
    let scale = n as f64 / cfg.batch_size as f64;
    let mut theta = theta0;
    let mut grad = vec![0.0; theta.len()];
    let mut batch = vec![0usize; cfg.batch_size];
    let mut kept = Vec::with_capacity(cfg.samples);
    let mut initial = None;
    let mut over = 0usize;
    let total = cfg.burn_in + cfg.samples * cfg.thin;
    for t in 0..total {
        batch.iter_mut().for_each(|b| *b = rng.below(n));
        let mut lik_grad = vec![0.0; theta.len()];
        let log_lik = target.add_grad_log_lik(&theta, &batch, &mut lik_grad)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        target.add_grad_log_prior(&theta, &mut grad);
        grad.iter_mut().zip(&lik_grad).for_each(|(g, l)| *g += scale * l);

        let loss = -scale * log_lik;
        let init = *initial.get_or_insert(loss);
        if init > 0.0 && loss > DIVERGENCE_FACTOR * init {
            over += 1;
            if over >= DIVERGENCE_PATIENCE {
                return Err(TeacherError::Diverged {
                    step: t,
                    loss,
                    initial: init,
                    factor: DIVERGENCE_FACTOR,
                    patience: DIVERGENCE_PATIENCE,
                });
            }
        } else {
            over = 0;
        }

        let eps = cfg.step.at(t);
        let sd = (2.0 * eps).sqrt();
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th += eps * g + sd * rng.normal();
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(TeacherError::Diverged { step: t, loss: f64::INFINITY, initial: init, factor: DIVERGENCE_FACTOR, patience: 0 });
        }
        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == cfg.thin - 1 {
            kept.push(theta.clone());
        }
    }
    Ok(kept)
}

/// Softmax MLP classifier with an isotropic Gaussian prior.
pub struct MlpTarget<'a> {
    pub template: MlpParams,
    pub data: &'a Dataset,
    pub prior_precision: f64,
}

impl GradientTarget for MlpTarget<'_> {
    fn dim(&self) -> usize {
        self.template.param_count()
    }

    fn n_data(&self) -> usize {
        self.data.len()
    }

    fn add_grad_log_prior(&self, theta: &[f64], grad: &mut [f64]) {
        grad.iter_mut().zip(theta).for_each(|(g, t)| *g -= self.prior_precision * t);
    }

    fn add_grad_log_lik(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64, TeacherError> {
        let mut net = self.template.clone();
        net.set_flat(theta)?;
        let labels = self.data.labels()?;
        let mut total = 0.0;
        for &i in batch {
            let (y, tape) = mlp_forward(&net, &self.data.features[i], None)?;
            let label = labels[i];
            total += log_softmax(tape.logits())[label];
            let delta: Vec<f64> = y.iter().enumerate().map(|(k, p)| p - f64::from(u8::from(k == label))).collect();
            let bp = mlp_backward_from_pre(&net, &tape, &delta)?;
            // delta is the gradient of −log p; subtract to add ∇log p
            grad.iter_mut().zip(bp.grads.to_flat()).for_each(|(g, d)| *g -= d);
        }
        Ok(total)
    }
}

/// Logistic regression p(y = 1 | x, θ) = σ(xᵀθ) with prior N(0, Λ⁻¹ I).
pub struct LogisticTarget<'a> {
    pub data: &'a Dataset,
    pub prior_precision: f64,
    pub intercept: bool,
}

impl GradientTarget for LogisticTarget<'_> {
    fn dim(&self) -> usize {
        self.data.dim() + usize::from(self.intercept)
    }

    fn n_data(&self) -> usize {
        self.data.len()
    }

    fn add_grad_log_prior(&self, theta: &[f64], grad: &mut [f64]) {
        grad.iter_mut().zip(theta).for_each(|(g, t)| *g -= self.prior_precision * t);
    }

    fn add_grad_log_lik(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64, TeacherError> {
        let labels = self.data.labels()?;
        let d = self.data.dim();
        let mut total = 0.0;
        for &i in batch {
            let x = &self.data.features[i];
            let mut z: f64 = theta.iter().zip(x).map(|(a, b)| a * b).sum();
            if self.intercept {
                z += theta[d];
            }
            let p = super::logistic(z);
            let y = labels[i] as f64;
            // log σ(z) = −ln(1 + e^{−z}); log(1 − σ(z)) = −ln(1 + e^{z})
            total += if labels[i] == 1 { -(-z).exp().ln_1p() } else { -z.exp().ln_1p() };
            let r = y - p;
            grad.iter_mut().zip(x).for_each(|(g, v)| *g += r * v);
            if self.intercept {
                grad[d] += r;
            }
        }
        Ok(total)
    }
}

/// SGLD over a softmax MLP with widths `arch` (input first, classes last).
pub fn sgld_train(data: &Dataset, arch: &[usize], cfg: &SgldConfig, rng: &mut RngState) -> Result<PosteriorSampleSet, TeacherError> {
    check_arch(data, arch)?;
    let template = MlpParams::init(arch, Activation::Relu, Activation::Softmax, rng)?;
    let theta0 = template.to_flat();
    let target = MlpTarget { template, data, prior_precision: cfg.prior_precision };
    let kept = sgld_run(&target, theta0, cfg, rng)?;
    let snapshots = kept
        .iter()
        .map(|t| {
            let mut net = target.template.clone();
            net.set_flat(t).map(|_| net)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorSampleSet {
        samples: PosteriorSamples::Sgld { snapshots },
        provenance: Provenance { burn_in: cfg.burn_in, thinning: cfg.thin, seed: rng.seed() },
    })
}

pub(crate) fn check_arch(data: &Dataset, arch: &[usize]) -> Result<(), TeacherError> {
    if arch.len() < 2 || arch[0] != data.dim() {
        return Err(TeacherError::Config(format!("architecture {arch:?} does not start with the input width {}", data.dim())));
    }
    let k = data.n_classes().ok_or_else(|| TeacherError::Config("training data needs labels".into()))?;
    if arch[arch.len() - 1] < k.max(2) {
        return Err(TeacherError::Config(format!("architecture {arch:?} has fewer outputs than the {k} classes")));
    }
    Ok(())
}

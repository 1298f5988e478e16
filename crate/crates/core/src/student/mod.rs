//! The Dirichlet student α(x) = h(x)·exp(g(x)): a softmax prediction model
//! h and a scalar concentration model g.

mod checkpoint;
mod dirichlet;
mod fit;

use serde::{Deserialize, Serialize};

use crate::nnet::{mlp_backward, mlp_forward, mlp_predict, Activation, MlpGrads, MlpParams, NnetError, Tape};
use crate::numerics::{DirichletParams, NumericsError, RngState, SimplexPoint};

pub use checkpoint::{load_student, save_student, StudentManifest};
pub use dirichlet::{
    categorical_entropy, dirichlet_diff_entropy, dirichlet_diff_entropy_grad, dirichlet_log_pdf, dirichlet_mean,
    ln_beta,
};
pub use fit::{
    dirichlet_moments, fit_dirichlet_mle, fit_dirichlet_mle_points, fit_dirichlet_mmd, MmdFit, MmdFitConfig,
    MLE_MAX_ITERATIONS, MLE_REL_TOL,
};

/// Lower clamp applied to every α_k.
pub const ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum StudentError {
    #[error("network produced a non-finite output")]
    NonFinite,
    #[error("particle component {k} is {value}, outside the open simplex")]
    Boundary { k: usize, value: f64 },
    #[error("Dirichlet fit stopped after {iterations} iterations without converging; last iterate {last:?}")]
    NoConvergence { last: DirichletParams, iterations: usize },
    #[error("invalid student: {0}")]
    Config(String),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    /// Prediction model h (softmax output of width K).
    pub pm: MlpParams,
    /// Concentration model g (one linear output).
    pub cm: MlpParams,
    pub alpha_floor: f64,
}

impl StudentModel {
    pub fn new(pm: MlpParams, cm: MlpParams) -> Result<Self, StudentError> {
        if pm.output_activation() != Activation::Softmax || pm.output_dim() < 2 {
            return Err(StudentError::Config("prediction model must end in a softmax over K ≥ 2 classes".into()));
        }
        if cm.output_dim() != 1 || cm.output_activation() != Activation::Identity {
            return Err(StudentError::Config("concentration model must have one linear output".into()));
        }
        if pm.input_dim() != cm.input_dim() {
            return Err(StudentError::Config(format!(
                "prediction model reads {} inputs, concentration model {}",
                pm.input_dim(),
                cm.input_dim()
            )));
        }
        Ok(Self { pm, cm, alpha_floor: ALPHA_FLOOR })
    }

    /// Fresh student: `pm_widths` and `cm_hidden` exclude the input width.
    pub fn init(input_dim: usize, pm_hidden: &[usize], cm_hidden: &[usize], k: usize, rng: &mut RngState) -> Result<Self, StudentError> {
        let pm_sizes: Vec<usize> = std::iter::once(input_dim).chain(pm_hidden.iter().copied()).chain([k]).collect();
        let cm_sizes: Vec<usize> = std::iter::once(input_dim).chain(cm_hidden.iter().copied()).chain([1]).collect();
        let pm = MlpParams::init(&pm_sizes, Activation::Relu, Activation::Softmax, rng)?;
        let cm = MlpParams::init(&cm_sizes, Activation::Relu, Activation::Identity, rng)?;
        Self::new(pm, cm)
    }

    pub fn k(&self) -> usize {
        self.pm.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.pm.input_dim()
    }

    /// Zeroes the concentration model's output weights so that g(x) = g0
    /// everywhere.
    pub fn reset_concentration(&mut self, g0: f64) {
        let n = self.cm.n_layers();
        let out = &mut self.cm.layers_mut()[n - 1];
        out.weights.iter_mut().for_each(|w| *w = 0.0);
        out.bias[0] = g0;
    }

    /// Sets the concentration model's output bias, i.e. shifts g(x).
    pub fn shift_concentration(&mut self, delta: f64) {
        let n = self.cm.n_layers();
        self.cm.layers_mut()[n - 1].bias[0] += delta;
    }
}

fn alpha_from(h: &[f64], g: f64, floor: f64) -> Result<Vec<f64>, StudentError> {
    if !g.is_finite() || h.iter().any(|v| !v.is_finite()) {
        return Err(StudentError::NonFinite);
    }
    let e = g.exp();
    if !e.is_finite() {
        return Err(StudentError::NonFinite);
    }
    Ok(h.iter().map(|hk| (hk * e).max(floor)).collect())
}

/// α_k = max(h_k(x)·e^{g(x)}, alpha_floor).
pub fn student_alpha(m: &StudentModel, x: &[f64]) -> Result<DirichletParams, StudentError> {
    let h = mlp_predict(&m.pm, x)?;
    let g = mlp_predict(&m.cm, x)?[0];
    Ok(DirichletParams::new(alpha_from(&h, g, m.alpha_floor)?)?)
}

/// One-pass prediction: the mean of `student_alpha`, which is h(x) up to
/// rounding and the floor.
pub fn student_predict(m: &StudentModel, x: &[f64]) -> Result<SimplexPoint, StudentError> {
    Ok(dirichlet_mean(&student_alpha(m, x)?))
}

/// Forward state of both nets at one input, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StudentPass {
    pub h: Vec<f64>,
    pub g: f64,
    pub alpha: Vec<f64>,
    pm_tape: Tape,
    cm_tape: Tape,
}

impl StudentPass {
    pub fn precision(&self) -> f64 {
        self.g.exp()
    }

    pub fn dirichlet(&self) -> Result<DirichletParams, StudentError> {
        Ok(DirichletParams::new(self.alpha.clone())?)
    }
}

pub fn student_forward(m: &StudentModel, x: &[f64]) -> Result<StudentPass, StudentError> {
    let (h, pm_tape) = mlp_forward(&m.pm, x, None)?;
    let (gv, cm_tape) = mlp_forward(&m.cm, x, None)?;
    let g = gv[0];
    let alpha = alpha_from(&h, g, m.alpha_floor)?;
    Ok(StudentPass { h, g, alpha, pm_tape, cm_tape })
}

/// Gradients of a scalar loss with respect to both nets.
#[derive(Debug, Clone)]
pub struct StudentGrads {
    pub pm: MlpGrads,
    pub cm: MlpGrads,
}

/// Chains ∂L/∂α through α = max(h·e^g, floor) into both networks.
/// Clamped components pass no gradient.
pub fn student_backward(m: &StudentModel, pass: &StudentPass, dl_dalpha: &[f64]) -> Result<StudentGrads, StudentError> {
    let e = pass.g.exp();
    let mut dl_dh = vec![0.0; pass.h.len()];
    let mut dl_dg = 0.0;
    for k in 0..pass.h.len() {
        let raw = pass.h[k] * e;
        if raw >= m.alpha_floor {
            dl_dh[k] = e * dl_dalpha[k];
            dl_dg += raw * dl_dalpha[k];
        }
    }
    let pm = mlp_backward(&m.pm, &pass.pm_tape, &dl_dh)?.grads;
    let cm = mlp_backward(&m.cm, &pass.cm_tape, &[dl_dg])?.grads;
    Ok(StudentGrads { pm, cm })
}

/// Which uncertainty measure to score with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    /// Categorical entropy of the prediction.
    E,
    /// Maximum class probability.
    P,
    /// Dirichlet differential entropy.
    D,
    /// Concentration output g.
    C,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::E, Measure::P, Measure::D, Measure::C];

    pub fn tag(self) -> &'static str {
        match self {
            Measure::E => "E",
            Measure::P => "P",
            Measure::D => "D",
            Measure::C => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub entropy: f64,
    pub max_prob: f64,
    pub diff_entropy: f64,
    pub concentration: f64,
}

impl UncertaintyScores {
    /// Score where larger means more uncertain: P and C are negated.
    pub fn score(&self, measure: Measure) -> f64 {
        match measure {
            Measure::E => self.entropy,
            Measure::P => -self.max_prob,
            Measure::D => self.diff_entropy,
            Measure::C => -self.concentration,
        }
    }
}

pub fn uncertainty_scores(m: &StudentModel, x: &[f64]) -> Result<UncertaintyScores, StudentError> {
    let h = mlp_predict(&m.pm, x)?;
    let g = mlp_predict(&m.cm, x)?[0];
    let alpha = DirichletParams::new(alpha_from(&h, g, m.alpha_floor)?)?;
    Ok(UncertaintyScores {
        entropy: categorical_entropy(&h),
        max_prob: h.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        diff_entropy: dirichlet_diff_entropy(&alpha),
        concentration: g,
    })
}

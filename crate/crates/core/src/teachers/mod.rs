//! Bayesian teachers and the push-forward of their posterior samples onto
//! the probability simplex.

mod blr;
mod mcdp;
mod particles;
mod sgld;

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::nnet::{mlp_forward, mlp_predict, DropoutMask, MlpParams, NnetError};
use crate::numerics::{NumericsError, SimplexPoint};

pub use blr::{blr_pg_gibbs, logistic, BlrConfig};
pub use mcdp::{mcdp_sample, mcdp_train, McdpConfig, McdpDropout};
pub use particles::{read_particle_store, write_particle_store, ParticleSidecar, ParticleStore};
pub use sgld::{
    sgld_run, sgld_train, GradientTarget, LogisticTarget, MlpTarget, SgldConfig, StepSchedule, DIVERGENCE_FACTOR,
    DIVERGENCE_PATIENCE,
};

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("precision matrix is not positive definite (ill-conditioned data or prior)")]
    Singular,
    #[error("training diverged at step {step}: loss {loss} stayed above {factor}x the initial {initial} for {patience} steps")]
    Diverged { step: usize, loss: f64, initial: f64, factor: f64, patience: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected input width {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("particle store: {0}")]
    Store(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Blr,
    Sgld,
    Mcdp,
}

impl TeacherKind {
    pub fn name(self) -> &'static str {
        match self {
            TeacherKind::Blr => "blr",
            TeacherKind::Sgld => "sgld",
            TeacherKind::Mcdp => "mcdp",
        }
    }
}

/// How a sample set was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorSamples {
    /// Logistic-regression coefficients; `intercept` appends a constant 1
    /// feature before the dot product.
    Blr { thetas: Vec<Vec<f64>>, intercept: bool },
    Sgld { snapshots: Vec<MlpParams> },
    Mcdp { shared: MlpParams, masks: Vec<DropoutMask> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    pub samples: PosteriorSamples,
    pub provenance: Provenance,
}

impl PosteriorSampleSet {
    pub fn kind(&self) -> TeacherKind {
        match self.samples {
            PosteriorSamples::Blr { .. } => TeacherKind::Blr,
            PosteriorSamples::Sgld { .. } => TeacherKind::Sgld,
            PosteriorSamples::Mcdp { .. } => TeacherKind::Mcdp,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            PosteriorSamples::Blr { thetas, .. } => thetas.len(),
            PosteriorSamples::Sgld { snapshots } => snapshots.len(),
            PosteriorSamples::Mcdp { masks, .. } => masks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of classes of the push-forward.
    pub fn k(&self) -> usize {
        match &self.samples {
            PosteriorSamples::Blr { .. } => 2,
            PosteriorSamples::Sgld { snapshots } => snapshots[0].output_dim(),
            PosteriorSamples::Mcdp { shared, .. } => shared.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.samples {
            PosteriorSamples::Blr { thetas, intercept } => thetas[0].len() - usize::from(*intercept),
            PosteriorSamples::Sgld { snapshots } => snapshots[0].input_dim(),
            PosteriorSamples::Mcdp { shared, .. } => shared.input_dim(),
        }
    }

    /// The first `m` samples.
    pub fn prefix(&self, m: usize) -> PosteriorSampleSet {
        let samples = match &self.samples {
            PosteriorSamples::Blr { thetas, intercept } => {
                PosteriorSamples::Blr { thetas: thetas[..m].to_vec(), intercept: *intercept }
            }
            PosteriorSamples::Sgld { snapshots } => PosteriorSamples::Sgld { snapshots: snapshots[..m].to_vec() },
            PosteriorSamples::Mcdp { shared, masks } => {
                PosteriorSamples::Mcdp { shared: shared.clone(), masks: masks[..m].to_vec() }
            }
        };
        PosteriorSampleSet { samples, provenance: self.provenance.clone() }
    }

    /// Network used to initialize a student's prediction model: the mean
    /// snapshot for SGLD, the shared weights for MC dropout.
    pub fn mean_network(&self) -> Result<Option<MlpParams>, TeacherError> {
        Ok(match &self.samples {
            PosteriorSamples::Blr { .. } => None,
            PosteriorSamples::Sgld { snapshots } => Some(MlpParams::mean_of(snapshots)?),
            PosteriorSamples::Mcdp { shared, .. } => Some(shared.clone()),
        })
    }
}

/// The S simplex points obtained by pushing every posterior sample through
/// the model at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub input_id: usize,
    pub points: Vec<SimplexPoint>,
}

impl ParticleCloud {
    pub fn new(input_id: usize, points: Vec<SimplexPoint>) -> Result<Self, TeacherError> {
        let k = points.first().map(SimplexPoint::k).ok_or_else(|| TeacherError::Config("empty particle cloud".into()))?;
        if points.iter().any(|p| p.k() != k) {
            return Err(TeacherError::Config("particles of mixed dimension".into()));
        }
        Ok(Self { input_id, points })
    }

    pub fn k(&self) -> usize {
        self.points[0].k()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_dim(samples: &PosteriorSampleSet, x: &[f64]) -> Result<(), TeacherError> {
    if x.len() != samples.input_dim() {
        return Err(TeacherError::DimensionMismatch { expected: samples.input_dim(), got: x.len() });
    }
    Ok(())
}

/// π_s = T_x(θ_s) for every sample, clamped into the open simplex.
pub fn pushforward(samples: &PosteriorSampleSet, input_id: usize, x: &[f64]) -> Result<ParticleCloud, TeacherError> {
    check_dim(samples, x)?;
    let points = match &samples.samples {
        PosteriorSamples::Blr { thetas, intercept } => thetas
            .iter()
            .map(|t| {
                let mut z: f64 = t.iter().zip(x).map(|(a, b)| a * b).sum();
                if *intercept {
                    z += t[t.len() - 1];
                }
                let p1 = logistic(z);
                SimplexPoint::from_weights_clamped(&[1.0 - p1, p1])
            })
            .collect::<Result<Vec<_>, _>>()?,
        PosteriorSamples::Sgld { snapshots } => snapshots
            .iter()
            .map(|net| SimplexPoint::from_weights_clamped(&mlp_predict(net, x)?).map_err(TeacherError::from))
            .collect::<Result<Vec<_>, _>>()?,
        PosteriorSamples::Mcdp { shared, masks } => masks
            .iter()
            .map(|m| {
                let (y, _) = mlp_forward(shared, x, Some(m))?;
                SimplexPoint::from_weights_clamped(&y).map_err(TeacherError::from)
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    ParticleCloud::new(input_id, points)
}

/// Pushes every row of `features` forward; input ids are row indices.
pub fn pushforward_all(samples: &PosteriorSampleSet, features: &[Vec<f64>]) -> Result<Vec<ParticleCloud>, TeacherError> {
    features.iter().enumerate().map(|(i, x)| pushforward(samples, i, x)).collect()
}

/// Monte Carlo predictive: the arithmetic mean of the particles.
pub fn mc_predict(cloud: &ParticleCloud) -> SimplexPoint {
    let k = cloud.k();
    let mut mean = vec![0.0; k];
    for p in &cloud.points {
        mean.iter_mut().zip(p.probs()).for_each(|(m, v)| *m += v);
    }
    let n = cloud.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    SimplexPoint::from_weights_clamped(&mean).expect("mean of simplex points is a simplex point")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Activation;
    use crate::numerics::RngState;

    fn prov() -> Provenance {
        Provenance { burn_in: 0, thinning: 1, seed: 0 }
    }

    #[test]
    fn zero_coefficients_give_even_odds() {
        let set = PosteriorSampleSet {
            samples: PosteriorSamples::Blr { thetas: vec![vec![0.0, 0.0]; 4], intercept: false },
            provenance: prov(),
        };
        let cloud = pushforward(&set, 0, &[3.0, -1.0]).unwrap();
        for p in &cloud.points {
            assert_eq!(p.probs(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn identical_samples_identical_particles() {
        let mut rng = RngState::new(3);
        let net = MlpParams::init(&[2, 4, 3], Activation::Relu, Activation::Softmax, &mut rng).unwrap();
        let set = PosteriorSampleSet { samples: PosteriorSamples::Sgld { snapshots: vec![net; 5] }, provenance: prov() };
        let cloud = pushforward(&set, 0, &[0.3, 0.2]).unwrap();
        assert!(cloud.points.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn cloud_mean_matches_direct_average() {
        let mut rng = RngState::new(4);
        let nets: Vec<MlpParams> = (0..7)
            .map(|_| MlpParams::init(&[2, 5, 3], Activation::Relu, Activation::Softmax, &mut rng).unwrap())
            .collect();
        let x = [0.4, -1.0];
        let set = PosteriorSampleSet { samples: PosteriorSamples::Sgld { snapshots: nets.clone() }, provenance: prov() };
        let mean = mc_predict(&pushforward(&set, 0, &x).unwrap());
        let mut direct = [0.0; 3];
        for n in &nets {
            let y = mlp_predict(n, &x).unwrap();
            for k in 0..3 {
                direct[k] += y[k] / 7.0;
            }
        }
        for k in 0..3 {
            assert!((mean.probs()[k] - direct[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_predict_small_cases() {
        let a = SimplexPoint::new(vec![1.0, 0.0]).unwrap();
        let b = SimplexPoint::new(vec![0.0, 1.0]).unwrap();
        let m = mc_predict(&ParticleCloud::new(0, vec![a.clone(), b]).unwrap());
        assert!((m.probs()[0] - 0.5).abs() < 1e-12);
        let single = SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap();
        let m = mc_predict(&ParticleCloud::new(0, vec![single.clone()]).unwrap());
        assert!(m.total_variation(&single) < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let set = PosteriorSampleSet {
            samples: PosteriorSamples::Blr { thetas: vec![vec![0.0, 0.0, 1.0]], intercept: true },
            provenance: prov(),
        };
        assert!(pushforward(&set, 0, &[1.0, 2.0]).is_ok());
        assert!(matches!(pushforward(&set, 0, &[1.0]), Err(TeacherError::DimensionMismatch { .. })));
    }
}

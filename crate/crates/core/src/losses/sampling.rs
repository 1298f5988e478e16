//! Reparameterized student samples: Dirichlet draws that remember their
//! Gamma variates so losses on the points can be pulled back to α.

use super::LossError;
use crate::numerics::{
    dirichlet_log_gamma_grads, dirichlet_pullback, sample_dirichlet_draw, DirichletDraw, DirichletParams,
    NumericsError, RngState,
};

/// Whole-batch redraws allowed when an implicit gradient hits a
/// degenerate density.
pub const DEGENERATE_RETRIES: usize = 5;

#[derive(Debug, Clone)]
pub struct ReparamSamples {
    pub draws: Vec<DirichletDraw>,
    /// ∂ ln γ_j / ∂α_j per draw.
    pub log_gamma_grads: Vec<Vec<f64>>,
}

impl ReparamSamples {
    pub fn draw(alpha: &DirichletParams, n: usize, rng: &mut RngState) -> Result<Self, LossError> {
        for _ in 0..=DEGENERATE_RETRIES {
            let draws = (0..n).map(|_| sample_dirichlet_draw(alpha, rng)).collect::<Result<Vec<_>, _>>()?;
            let grads: Result<Vec<_>, _> = draws.iter().map(|d| dirichlet_log_gamma_grads(d, alpha.alpha())).collect();
            match grads {
                Ok(log_gamma_grads) => return Ok(Self { draws, log_gamma_grads }),
                Err(NumericsError::DegenerateDensity { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(LossError::Degenerate { retries: DEGENERATE_RETRIES })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn points(&self) -> Vec<&[f64]> {
        self.draws.iter().map(|d| d.point.probs()).collect()
    }

    /// Σ_s ∂L/∂α given ∂L/∂π_s for every draw.
    pub fn pullback(&self, grad_points: &[Vec<f64>]) -> Vec<f64> {
        let k = self.draws.first().map_or(0, |d| d.point.k());
        let mut out = vec![0.0; k];
        for ((d, r), g) in self.draws.iter().zip(&self.log_gamma_grads).zip(grad_points) {
            for (o, v) in out.iter_mut().zip(dirichlet_pullback(d.point.probs(), r, g)) {
                *o += v;
            }
        }
        out
    }
}

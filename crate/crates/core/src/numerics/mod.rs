//! Special functions, simplex types, seeded samplers and reparameterization
//! gradients shared by every other module.

pub mod random;
pub mod reparam;
pub mod simplex;
pub mod special;

pub use random::{
    sample_dirichlet, sample_dirichlet_draw, sample_gamma, sample_log_gamma, sample_polya_gamma,
    sample_polya_gamma_bounded, DirichletDraw, RngState, PG_MAX_ITERATIONS,
};
pub use reparam::{
    dirichlet_log_gamma_grads, dirichlet_pullback, implicit_grad_gamma, implicit_grad_log_gamma,
    normalization_jacobian,
};
pub use simplex::{DirichletParams, SimplexPoint, SIMPLEX_FLOOR};
pub use special::{digamma, gamma_cdf, inv_digamma, ln_gamma, trigamma};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{function} is undefined at {value}")]
    Domain { function: &'static str, value: f64 },
    #[error("{function} did not converge for shape {shape}, z {z}")]
    NoConvergence { function: &'static str, shape: f64, z: f64 },
    #[error("invalid simplex point: {0}")]
    InvalidSimplex(String),
    #[error("invalid Dirichlet parameters: {0}")]
    InvalidAlpha(String),
    #[error("Dirichlet draw underflowed {draws} times in a row")]
    Underflow { draws: usize },
    #[error("{sampler} sampler hit its iteration cap of {bound}")]
    IterationCap { sampler: &'static str, bound: usize },
    #[error("Gamma density at z = {z} (shape {shape}) is not representable")]
    DegenerateDensity { z: f64, shape: f64 },
}

//! Implicit reparameterization gradients for Gamma and Dirichlet draws.
//!
//! A Gamma draw z with fixed underlying uniform u satisfies F(z; a) = u, so
//! dz/da = -(∂F/∂a) / (∂F/∂z). The shape derivative of the CDF is taken by
//! central differences with step `max(1e-5 a, 1e-7)`. Both derivatives are
//! evaluated as derivatives of ln P (lower half) or ln Q (upper half), which
//! is the same ratio but stays finite for draws deep in either tail.

use super::random::DirichletDraw;
use super::special::{gamma_ln_pdf, ln_gamma_p, ln_gamma_q, ln_gamma_unchecked};
use super::NumericsError;

fn shape_step(shape: f64) -> f64 {
    (1e-5 * shape).max(1e-7).min(0.5 * shape)
}

/// ∂z/∂shape for a Gamma(shape, 1) draw `z` at fixed uniform randomness.
pub fn implicit_grad_gamma(z: f64, shape: f64) -> Result<f64, NumericsError> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(NumericsError::Domain { function: "implicit_grad_gamma(z)", value: z });
    }
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(NumericsError::Domain { function: "implicit_grad_gamma(shape)", value: shape });
    }
    let ln_pdf = gamma_ln_pdf(shape, z.ln());
    if ln_pdf < f64::MIN_POSITIVE.ln() {
        return Err(NumericsError::DegenerateDensity { z, shape });
    }
    Ok(z * implicit_grad_log_gamma(z.ln(), shape)?)
}

/// ∂ ln z / ∂shape for a Gamma draw given as `ln z`.
pub fn implicit_grad_log_gamma(ln_z: f64, shape: f64) -> Result<f64, NumericsError> {
    if !ln_z.is_finite() {
        return Err(NumericsError::Domain { function: "implicit_grad_log_gamma(ln z)", value: ln_z });
    }
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(NumericsError::Domain { function: "implicit_grad_log_gamma(shape)", value: shape });
    }
    let h = shape_step(shape);
    // ln(z f(z)) with f the Gamma density
    let ln_zf = shape * ln_z - ln_z.exp() - ln_gamma_unchecked(shape);
    let lp = ln_gamma_p(shape, ln_z)?;
    let grad = if lp <= -std::f64::consts::LN_2 {
        let d = (ln_gamma_p(shape + h, ln_z)? - ln_gamma_p(shape - h, ln_z)?) / (2.0 * h);
        -d * (lp - ln_zf).exp()
    } else {
        let lq = ln_gamma_q(shape, ln_z)?;
        let d = (ln_gamma_q(shape + h, ln_z)? - ln_gamma_q(shape - h, ln_z)?) / (2.0 * h);
        d * (lq - ln_zf).exp()
    };
    if !grad.is_finite() {
        return Err(NumericsError::DegenerateDensity { z: ln_z.exp(), shape });
    }
    Ok(grad)
}

/// Jacobian of π = γ / Σγ with respect to the Gamma variates:
/// `J[k][j] = (δ_kj T - γ_k) / T²`.
pub fn normalization_jacobian(gammas: &[f64]) -> Vec<Vec<f64>> {
    let t: f64 = gammas.iter().sum();
    let t2 = t * t;
    (0..gammas.len())
        .map(|k| {
            (0..gammas.len())
                .map(|j| (if k == j { t } else { 0.0 } - gammas[k]) / t2)
                .collect()
        })
        .collect()
}

/// Per-component ∂ ln γ_j / ∂α_j for a recorded Dirichlet draw.
pub fn dirichlet_log_gamma_grads(draw: &DirichletDraw, alpha: &[f64]) -> Result<Vec<f64>, NumericsError> {
    draw.log_gammas
        .iter()
        .zip(alpha)
        .map(|(&lg, &a)| implicit_grad_log_gamma(lg, a))
        .collect()
}

/// Pulls an upstream gradient ∂L/∂π back to ∂L/∂α for one recorded draw.
///
/// With r_j = ∂ ln γ_j/∂α_j the chain through the normalization is
/// ∂π_k/∂α_j = π_j (δ_kj − π_k) r_j, so
/// ∂L/∂α_j = π_j r_j (∂L/∂π_j − Σ_k π_k ∂L/∂π_k).
pub fn dirichlet_pullback(pi: &[f64], log_gamma_grads: &[f64], upstream: &[f64]) -> Vec<f64> {
    let dot: f64 = pi.iter().zip(upstream).map(|(p, u)| p * u).sum();
    pi.iter()
        .zip(log_gamma_grads)
        .zip(upstream)
        .map(|((p, r), u)| p * r * (u - dot))
        .collect()
}

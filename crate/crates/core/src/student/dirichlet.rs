use super::StudentError;
use crate::numerics::special::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};
use crate::numerics::{DirichletParams, SimplexPoint};

pub fn dirichlet_mean(alpha: &DirichletParams) -> SimplexPoint {
    let a0 = alpha.precision();
    SimplexPoint::from_weights_clamped(&alpha.alpha().iter().map(|a| a / a0).collect::<Vec<_>>())
        .expect("positive weights normalize")
}

/// ln B(α) = Σ ln Γ(α_k) − ln Γ(α₀).
pub fn ln_beta(alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| ln_gamma_unchecked(a)).sum::<f64>() - ln_gamma_unchecked(a0)
}

/// ln Γ(α₀) − Σ ln Γ(α_k) + Σ (α_k − 1) ln π_k.
pub fn dirichlet_log_pdf(alpha: &DirichletParams, pi: &SimplexPoint) -> Result<f64, StudentError> {
    if alpha.k() != pi.k() {
        return Err(StudentError::Config(format!("α has K = {}, π has K = {}", alpha.k(), pi.k())));
    }
    let mut s = -ln_beta(alpha.alpha());
    for (k, (&a, &p)) in alpha.alpha().iter().zip(pi.probs()).enumerate() {
        if p <= 0.0 {
            return Err(StudentError::Boundary { k, value: p });
        }
        s += (a - 1.0) * p.ln();
    }
    Ok(s)
}

/// ln B(α) + (α₀ − K) ψ(α₀) − Σ (α_k − 1) ψ(α_k).
pub fn dirichlet_diff_entropy(alpha: &DirichletParams) -> f64 {
    let a = alpha.alpha();
    let a0 = alpha.precision();
    let k = a.len() as f64;
    ln_beta(a) + (a0 - k) * digamma_unchecked(a0) - a.iter().map(|&x| (x - 1.0) * digamma_unchecked(x)).sum::<f64>()
}

/// ∂H/∂α_j = (α₀ − K) ψ′(α₀) − (α_j − 1) ψ′(α_j).
pub fn dirichlet_diff_entropy_grad(alpha: &DirichletParams) -> Vec<f64> {
    let a0 = alpha.precision();
    let k = alpha.k() as f64;
    let common = (a0 - k) * trigamma_unchecked(a0);
    alpha.alpha().iter().map(|&a| common - (a - 1.0) * trigamma_unchecked(a)).collect()
}

/// −Σ p ln p with 0 ln 0 = 0.
pub fn categorical_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

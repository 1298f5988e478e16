use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Floor used to keep simplex points in the open simplex.
pub const SIMPLEX_FLOOR: f64 = 1e-12;

const SUM_TOL: f64 = 1e-9;

/// A point on the (K-1)-simplex: K nonnegative probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Result<Self, NumericsError> {
        if probs.len() < 2 {
            return Err(NumericsError::InvalidSimplex(format!("K = {} < 2", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(NumericsError::InvalidSimplex(format!("entry outside [0, 1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(NumericsError::InvalidSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes a nonnegative vector, then clamps every entry to at least
    /// [`SIMPLEX_FLOOR`] and renormalizes.
    pub fn from_weights_clamped(weights: &[f64]) -> Result<Self, NumericsError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(NumericsError::InvalidSimplex(format!("cannot normalize {weights:?}")));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| (w / sum).max(SIMPLEX_FLOOR)).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Self::new(probs)
    }

    /// Clamps into the open simplex.
    pub fn clamped(&self) -> Self {
        Self::from_weights_clamped(&self.0).expect("valid simplex point stays valid")
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn total_variation(&self, other: &SimplexPoint) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Dirichlet concentration parameters α ∈ R^K_{>0}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, NumericsError> {
        if alpha.len() < 2 {
            return Err(NumericsError::InvalidAlpha(format!("K = {} < 2", alpha.len())));
        }
        if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(NumericsError::InvalidAlpha(format!("{alpha:?}")));
        }
        Ok(Self(alpha))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.0
    }

    /// Precision α₀ = Σ α_k.
    pub fn precision(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexPoint::new(vec![1.0]).is_err());
        assert!(SimplexPoint::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn clamping_stays_in_open_simplex() {
        let p = SimplexPoint::from_weights_clamped(&[1.0, 0.0, 0.0]).unwrap();
        assert!(p.probs().iter().all(|v| *v >= SIMPLEX_FLOOR * 0.999));
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let p = SimplexPoint::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(p.argmax(), 0);
        let q = SimplexPoint::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(q.argmax(), 1);
    }

    #[test]
    fn alpha_validation() {
        assert!(DirichletParams::new(vec![1.0, 2.0]).is_ok());
        assert!(DirichletParams::new(vec![0.0, 2.0]).is_err());
        assert!(DirichletParams::new(vec![f64::INFINITY, 2.0]).is_err());
        assert_eq!(DirichletParams::new(vec![2.0, 3.0, 5.0]).unwrap().precision(), 10.0);
    }
}

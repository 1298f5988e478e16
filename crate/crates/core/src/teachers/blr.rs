//! Polya-Gamma Gibbs sampler for Bayesian logistic regression.
//!
//! With prior θ ~ N(0, Λ⁻¹) the two conditionals are
//! ω_n | θ ~ PG(1, x_nᵀθ) and θ | ω ~ N(m, V) where
//! V = (XᵀΩX + Λ)⁻¹ and m = V Xᵀ(y − 1/2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PosteriorSampleSet, PosteriorSamples, Provenance, TeacherError};
use crate::data::Dataset;
use crate::numerics::{sample_polya_gamma, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlrConfig {
    /// Diagonal prior precision Λ, shared by every coefficient.
    pub prior_precision: f64,
    pub burn_in: usize,
    pub samples: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Append a constant feature so the model has a bias term.
    #[serde(default)]
    pub intercept: bool,
}

fn one() -> usize {
    1
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn blr_pg_gibbs(data: &Dataset, cfg: &BlrConfig, rng: &mut RngState) -> Result<PosteriorSampleSet, TeacherError> {
    if !(cfg.prior_precision > 0.0 && cfg.prior_precision.is_finite()) {
        return Err(TeacherError::Config(format!("prior precision must be positive, got {}", cfg.prior_precision)));
    }
    if cfg.samples == 0 || cfg.thin == 0 {
        return Err(TeacherError::Config("samples and thin must be at least 1".into()));
    }
    let labels = data.labels()?;
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(TeacherError::Config(format!("logistic regression needs labels in {{0, 1}}, found {bad}")));
    }
    let n = data.len();
    let d = data.dim() + usize::from(cfg.intercept);
    let x = DMatrix::from_fn(n, d, |i, j| if j < data.dim() { data.features[i][j] } else { 1.0 });
    let kappa = DVector::from_iterator(n, labels.iter().map(|&y| y as f64 - 0.5));
    let xt_kappa = x.transpose() * &kappa;

    let mut theta = DVector::zeros(d);
    let mut kept = Vec::with_capacity(cfg.samples);
    let total = cfg.burn_in + cfg.samples * cfg.thin;
    for it in 0..total {
        let psi = &x * &theta;
        let omega = psi.iter().map(|&c| sample_polya_gamma(c, rng)).collect::<Result<Vec<_>, _>>()?;
        let mut precision = DMatrix::from_diagonal_element(d, d, cfg.prior_precision);
        for (i, w) in omega.iter().enumerate() {
            let row = x.row(i);
            precision += *w * row.transpose() * row;
        }
        let chol = precision.cholesky().ok_or(TeacherError::Singular)?;
        let mean = chol.solve(&xt_kappa);
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.normal()));
        let lt = chol.l().transpose();
        let noise = lt.solve_upper_triangular(&z).ok_or(TeacherError::Singular)?;
        theta = mean + noise;
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == cfg.thin - 1 {
            kept.push(theta.iter().copied().collect());
        }
    }
    Ok(PosteriorSampleSet {
        samples: PosteriorSamples::Blr { thetas: kept, intercept: cfg.intercept },
        provenance: Provenance { burn_in: cfg.burn_in, thinning: cfg.thin, seed: rng.seed() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::teachers::{mc_predict, pushforward};

    /// x = +1 labeled 0, x = −1 labeled 1, 50 each.
    fn separable() -> Dataset {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for _ in 0..50 {
            f.push(vec![1.0]);
            l.push(0);
            f.push(vec![-1.0]);
            l.push(1);
        }
        Dataset::new("sep", Split::Train, f, Some(l)).unwrap()
    }

    fn thetas(set: &PosteriorSampleSet) -> Vec<f64> {
        match &set.samples {
            PosteriorSamples::Blr { thetas, .. } => thetas.iter().map(|t| t[0]).collect(),
            _ => unreachable!(),
        }
    }

    /// Random-walk Metropolis on the same 1-D posterior.
    fn metropolis_mean(data: &Dataset, prec: f64, steps: usize, rng: &mut RngState) -> f64 {
        let labels = data.labels().unwrap();
        let log_post = |t: f64| -> f64 {
            let mut s = -0.5 * prec * t * t;
            for (x, &y) in data.features.iter().zip(labels) {
                let z = x[0] * t;
                // y log σ(z) + (1−y) log(1−σ(z))
                s += if y == 1 { -(1.0 + (-z).exp()).ln() } else { -(1.0 + z.exp()).ln() };
            }
            s
        };
        let mut t = 0.0;
        let mut lp = log_post(t);
        let mut acc = 0.0;
        let burn = steps / 10;
        for i in 0..steps {
            let prop = t + 0.5 * rng.normal();
            let lq = log_post(prop);
            if rng.uniform().ln() < lq - lp {
                t = prop;
                lp = lq;
            }
            if i >= burn {
                acc += t;
            }
        }
        acc / (steps - burn) as f64
    }

    #[test]
    fn separable_posterior_matches_metropolis() {
        let data = separable();
        let cfg = BlrConfig { prior_precision: 1.0, burn_in: 200, samples: 4000, thin: 1, intercept: false };
        let set = blr_pg_gibbs(&data, &cfg, &mut RngState::new(7)).unwrap();
        let t = thetas(&set);
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!(mean < -1.0, "mean {mean}");
        let reference = metropolis_mean(&data, 1.0, 200_000, &mut RngState::new(8));
        assert!((mean - reference).abs() < 0.05 * reference.abs(), "{mean} vs {reference}");
        let labels = data.labels().unwrap();
        let correct = data
            .features
            .iter()
            .zip(labels)
            .filter(|(x, y)| mc_predict(&pushforward(&set, 0, x).unwrap()).argmax() == **y)
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.95);
    }

    #[test]
    fn strong_prior_concentrates_at_zero() {
        let cfg = BlrConfig { prior_precision: 1e6, burn_in: 50, samples: 500, thin: 1, intercept: false };
        let set = blr_pg_gibbs(&separable(), &cfg, &mut RngState::new(1)).unwrap();
        let t = thetas(&set);
        assert!((t.iter().sum::<f64>() / t.len() as f64).abs() < 0.05);
    }

    #[test]
    fn same_seed_same_samples() {
        let cfg = BlrConfig { prior_precision: 1.0, burn_in: 10, samples: 50, thin: 2, intercept: true };
        let a = blr_pg_gibbs(&separable(), &cfg, &mut RngState::new(3)).unwrap();
        let b = blr_pg_gibbs(&separable(), &cfg, &mut RngState::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn thinned_chain_autocorrelation() {
        let mut rng = RngState::new(11);
        let f: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.normal()]).collect();
        let l: Vec<usize> = f.iter().map(|x| usize::from(rng.uniform() < logistic(1.5 * x[0]))).collect();
        let data = Dataset::new("1d", Split::Train, f, Some(l)).unwrap();
        let cfg = BlrConfig { prior_precision: 1.0, burn_in: 100, samples: 2000, thin: 2, intercept: false };
        let t = thetas(&blr_pg_gibbs(&data, &cfg, &mut rng).unwrap());
        let m = t.iter().sum::<f64>() / t.len() as f64;
        let var: f64 = t.iter().map(|v| (v - m).powi(2)).sum();
        let cov: f64 = t.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!(cov / var < 0.9, "lag-1 autocorrelation {}", cov / var);
    }

    #[test]
    fn rejects_non_binary_labels() {
        let data = Dataset::new("bad", Split::Train, vec![vec![1.0]], Some(vec![2])).unwrap();
        let cfg = BlrConfig { prior_precision: 1.0, burn_in: 0, samples: 1, thin: 1, intercept: false };
        assert!(blr_pg_gibbs(&data, &cfg, &mut RngState::new(0)).is_err());
    }
}

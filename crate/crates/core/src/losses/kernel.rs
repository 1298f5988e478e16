use serde::{Deserialize, Serialize};

use super::LossError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelKind {
    /// exp(−‖a − b‖² / (2σ²))
    Rbf { bandwidth: f64 },
    /// (γ⟨a, b⟩ + c)^d
    Polynomial { degree: u32, offset: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelComponent {
    pub kernel: KernelKind,
    pub weight: f64,
}

/// Weighted sum of RBF and polynomial kernels on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub components: Vec<KernelComponent>,
}

impl KernelSpec {
    pub fn new(components: Vec<KernelComponent>) -> Result<Self, LossError> {
        if components.is_empty() {
            return Err(LossError::Config("kernel needs at least one component".into()));
        }
        for c in &components {
            let ok = c.weight > 0.0
                && c.weight.is_finite()
                && match c.kernel {
                    KernelKind::Rbf { bandwidth } => bandwidth > 0.0 && bandwidth.is_finite(),
                    KernelKind::Polynomial { degree, offset, scale } => degree >= 1 && offset >= 0.0 && scale > 0.0,
                };
            if !ok {
                return Err(LossError::Config(format!("invalid kernel component {c:?}")));
            }
        }
        Ok(Self { components })
    }

    pub fn rbf(bandwidth: f64) -> Result<Self, LossError> {
        Self::new(vec![KernelComponent { kernel: KernelKind::Rbf { bandwidth }, weight: 1.0 }])
    }

    /// Equal-weight sum of an RBF with the given bandwidth and the
    /// polynomial (d = 2, c = 1, γ = 1).
    pub fn rbf_plus_poly(bandwidth: f64) -> Result<Self, LossError> {
        Self::new(vec![
            KernelComponent { kernel: KernelKind::Rbf { bandwidth }, weight: 0.5 },
            KernelComponent { kernel: KernelKind::Polynomial { degree: 2, offset: 1.0, scale: 1.0 }, weight: 0.5 },
        ])
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut sq = None;
        let mut dot = None;
        for c in &self.components {
            total += c.weight
                * match c.kernel {
                    KernelKind::Rbf { bandwidth } => {
                        let d2 = *sq.get_or_insert_with(|| sq_dist(a, b));
                        (-d2 / (2.0 * bandwidth * bandwidth)).exp()
                    }
                    KernelKind::Polynomial { degree, offset, scale } => {
                        let d = *dot.get_or_insert_with(|| inner(a, b));
                        (scale * d + offset).powi(degree as i32)
                    }
                };
        }
        total
    }

    /// Adds `coef · ∂k(a, b)/∂a` to `out` and returns k(a, b).
    pub fn eval_grad_a(&self, a: &[f64], b: &[f64], coef: f64, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for c in &self.components {
            match c.kernel {
                KernelKind::Rbf { bandwidth } => {
                    let s2 = bandwidth * bandwidth;
                    let v = (-sq_dist(a, b) / (2.0 * s2)).exp();
                    total += c.weight * v;
                    let f = -coef * c.weight * v / s2;
                    out.iter_mut().zip(a.iter().zip(b)).for_each(|(o, (x, y))| *o += f * (x - y));
                }
                KernelKind::Polynomial { degree, offset, scale } => {
                    let base = scale * inner(a, b) + offset;
                    total += c.weight * base.powi(degree as i32);
                    let f = coef * c.weight * degree as f64 * base.powi(degree as i32 - 1) * scale;
                    out.iter_mut().zip(b).for_each(|(o, y)| *o += f * y);
                }
            }
        }
        total
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Median pairwise Euclidean distance; 1.0 when every pair coincides.
pub fn median_heuristic<P: AsRef<[f64]>>(points: &[P]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(points[i].as_ref(), points[j].as_ref()).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_dirichlet, DirichletParams, RngState};
    use nalgebra::DMatrix;

    #[test]
    fn basic_values() {
        let k = KernelSpec::rbf(1.0).unwrap();
        assert_eq!(k.eval(&[0.2, 0.8], &[0.2, 0.8]), 1.0);
        let p = KernelSpec::new(vec![KernelComponent {
            kernel: KernelKind::Polynomial { degree: 1, offset: 0.0, scale: 1.0 },
            weight: 1.0,
        }])
        .unwrap();
        assert_eq!(p.eval(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn composite_is_sum_of_parts() {
        let k = KernelSpec::rbf_plus_poly(0.7).unwrap();
        let a = [0.2f64, 0.5, 0.3];
        let b = [0.6, 0.1, 0.3];
        let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let expect = 0.5 * (-d2 / (2.0 * 0.49)).exp() + 0.5 * (dot + 1.0).powi(2);
        assert!((k.eval(&a, &b) - expect).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_differences() {
        let k = KernelSpec::rbf_plus_poly(0.4).unwrap();
        let a = [0.2f64, 0.5, 0.3];
        let b = [0.6, 0.1, 0.3];
        let mut g = [0.0; 3];
        k.eval_grad_a(&a, &b, 1.0, &mut g);
        for j in 0..3 {
            let h = 1e-6;
            let mut up = a;
            let mut dn = a;
            up[j] += h;
            dn[j] -= h;
            let fd = (k.eval(&up, &b) - k.eval(&dn, &b)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn gram_matrix_is_psd() {
        let mut rng = RngState::new(3);
        let alpha = DirichletParams::new(vec![1.0; 3]).unwrap();
        let pts: Vec<_> = (0..30).map(|_| sample_dirichlet(&alpha, &mut rng).unwrap()).collect();
        let k = KernelSpec::rbf_plus_poly(median_heuristic(&pts)).unwrap();
        let gram = DMatrix::from_fn(30, 30, |i, j| k.eval(pts[i].probs(), pts[j].probs()));
        let min = gram.symmetric_eigenvalues().min();
        assert!(min >= -1e-8, "min eigenvalue {min}");
    }

    #[test]
    fn median_of_pairwise_distances() {
        let pts = [vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]];
        // distances 5, 1, √18
        assert!((median_heuristic(&pts) - 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(median_heuristic(&[vec![1.0], vec![1.0]]), 1.0);
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(KernelSpec::new(vec![]).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
    }
}

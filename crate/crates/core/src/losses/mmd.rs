//! Unbiased MMD² between a teacher particle set P and student samples Q:
//! mean_{m≠n} k(q_m, q_n) + mean_{m≠n} k(p_m, p_n) − 2/(|P||Q|) Σ k(q_m, p_n).

use super::{alternating_update, KernelSpec, LossError, ReparamSamples, StudentOpt};
use crate::numerics::{DirichletParams, RngState};
use crate::student::{student_backward, student_forward, StudentGrads, StudentModel};
use crate::teachers::ParticleCloud;

fn check_sizes(np: usize, nq: usize) -> Result<(), LossError> {
    if np < 2 || nq < 2 {
        return Err(LossError::Config(format!("MMD needs at least two points per set, got {np} and {nq}")));
    }
    Ok(())
}

/// mean_{m≠n} k(x_m, x_n).
pub fn mmd2_self_term<P: AsRef<[f64]>>(x: &[P], k: &KernelSpec) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += k.eval(x[i].as_ref(), x[j].as_ref());
        }
    }
    2.0 * s / (n * (n - 1)) as f64
}

fn cross_mean<P: AsRef<[f64]>, Q: AsRef<[f64]>>(a: &[P], b: &[Q], k: &KernelSpec) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += k.eval(x.as_ref(), y.as_ref());
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Orders two point sets canonically so the estimate is exactly symmetric.
fn first_is_canonical<P: AsRef<[f64]>, Q: AsRef<[f64]>>(p: &[P], q: &[Q]) -> bool {
    if p.len() != q.len() {
        return p.len() < q.len();
    }
    for (a, b) in p.iter().zip(q) {
        for (x, y) in a.as_ref().iter().zip(b.as_ref()) {
            match x.to_bits().cmp(&y.to_bits()) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    true
}

pub fn mmd2_estimate<P: AsRef<[f64]>, Q: AsRef<[f64]>>(p: &[P], q: &[Q], k: &KernelSpec) -> Result<f64, LossError> {
    check_sizes(p.len(), q.len())?;
    let cross = if first_is_canonical(p, q) { cross_mean(p, q, k) } else { cross_mean(q, p, k) };
    Ok((mmd2_self_term(q, k) + mmd2_self_term(p, k)) - 2.0 * cross)
}

/// MMD² and its gradient with respect to every student point.
#[derive(Debug, Clone)]
pub struct MmdGrad {
    pub loss: f64,
    pub grad_q: Vec<Vec<f64>>,
}

/// `pp_term` may carry a cached mean_{m≠n} k(p_m, p_n).
pub fn mmd2_grad_q<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    p: &[P],
    q: &[Q],
    k: &KernelSpec,
    pp_term: Option<f64>,
) -> Result<MmdGrad, LossError> {
    check_sizes(p.len(), q.len())?;
    let (np, nq) = (p.len(), q.len());
    let dim = q[0].as_ref().len();
    let mut grad_q = vec![vec![0.0; dim]; nq];
    let c_qq = 2.0 / (nq * (nq - 1)) as f64;
    let c_qp = 2.0 / (np * nq) as f64;
    let mut qq = 0.0;
    for i in 0..nq {
        for j in 0..nq {
            if i != j {
                qq += k.eval_grad_a(q[i].as_ref(), q[j].as_ref(), c_qq, &mut grad_q[i]);
            }
        }
    }
    let mut qp = 0.0;
    for (i, g) in grad_q.iter_mut().enumerate() {
        for pj in p {
            qp += k.eval_grad_a(q[i].as_ref(), pj.as_ref(), -c_qp, g);
        }
    }
    let pp = pp_term.unwrap_or_else(|| mmd2_self_term(p, k));
    let loss = qq / (nq * (nq - 1)) as f64 + pp - 2.0 * qp / (np * nq) as f64;
    if !loss.is_finite() {
        return Err(LossError::NonFinite { context: "MMD² estimate".into() });
    }
    Ok(MmdGrad { loss, grad_q })
}

/// MMD² between the cloud and recorded student draws, with ∂/∂α summed
/// through the reparameterization.
pub fn mmd_alpha_grad<P: AsRef<[f64]>>(
    cloud: &[P],
    samples: &ReparamSamples,
    k: &KernelSpec,
    pp_term: Option<f64>,
) -> Result<(f64, Vec<f64>), LossError> {
    let g = mmd2_grad_q(cloud, &samples.points(), k, pp_term)?;
    let d_alpha = samples.pullback(&g.grad_q);
    if d_alpha.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite { context: "MMD gradient".into() });
    }
    Ok((g.loss, d_alpha))
}

/// Draws S′ fresh student samples at x and returns the loss with network
/// gradients.
pub fn mmd_loss_grads(
    m: &StudentModel,
    x: &[f64],
    cloud: &ParticleCloud,
    k: &KernelSpec,
    s_prime: usize,
    pp_term: Option<f64>,
    rng: &mut RngState,
) -> Result<(f64, StudentGrads), LossError> {
    if cloud.k() != m.k() {
        return Err(LossError::Config(format!("cloud K = {}, student K = {}", cloud.k(), m.k())));
    }
    let pass = student_forward(m, x)?;
    let alpha = DirichletParams::new(pass.alpha.clone())?;
    let samples = ReparamSamples::draw(&alpha, s_prime, rng)?;
    let (loss, d_alpha) = mmd_alpha_grad(&cloud.points, &samples, k, pp_term)?;
    Ok((loss, student_backward(m, &pass, &d_alpha)?))
}

/// One alternating MMD update: φ₁ from one batch of student samples, then
/// φ₂ from a fresh batch.
pub fn mmd_step(
    m: &mut StudentModel,
    x: &[f64],
    cloud: &ParticleCloud,
    k: &KernelSpec,
    s_prime: usize,
    opt: &mut StudentOpt,
    rng: &mut RngState,
) -> Result<f64, LossError> {
    let pp = mmd2_self_term(&cloud.points, k);
    alternating_update(m, opt, |m| mmd_loss_grads(m, x, cloud, k, s_prime, Some(pp), rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_dirichlet, DirichletParams, RngState, SimplexPoint};

    fn cloud(alpha: &[f64], n: usize, seed: u64) -> Vec<SimplexPoint> {
        let mut rng = RngState::new(seed);
        let a = DirichletParams::new(alpha.to_vec()).unwrap();
        (0..n).map(|_| sample_dirichlet(&a, &mut rng).unwrap()).collect()
    }

    #[test]
    fn matches_brute_force_double_loop() {
        let k = KernelSpec::rbf_plus_poly(0.3).unwrap();
        let p = cloud(&[1.0, 2.0, 3.0], 20, 1);
        let q = cloud(&[3.0, 1.0, 1.0], 20, 2);
        let mut qq = 0.0;
        let mut pp = 0.0;
        let mut qp = 0.0;
        for m in 0..20 {
            for n in 0..20 {
                if m != n {
                    qq += k.eval(q[m].probs(), q[n].probs());
                    pp += k.eval(p[m].probs(), p[n].probs());
                }
                qp += k.eval(q[m].probs(), p[n].probs());
            }
        }
        let brute = qq / 380.0 + pp / 380.0 - 2.0 * qp / 400.0;
        assert!((mmd2_estimate(&p, &q, &k).unwrap() - brute).abs() < 1e-12);
        assert!((mmd2_grad_q(&p, &q, &k, None).unwrap().loss - brute).abs() < 1e-12);
    }

    #[test]
    fn symmetric_exactly() {
        let k = KernelSpec::rbf_plus_poly(0.5).unwrap();
        let p = cloud(&[1.0, 2.0, 3.0], 15, 3);
        let q = cloud(&[2.0, 2.0, 2.0], 11, 4);
        assert_eq!(mmd2_estimate(&p, &q, &k).unwrap(), mmd2_estimate(&q, &p, &k).unwrap());
        let r = cloud(&[2.0, 2.0, 2.0], 15, 5);
        assert_eq!(mmd2_estimate(&p, &r, &k).unwrap(), mmd2_estimate(&r, &p, &k).unwrap());
    }

    #[test]
    fn duplicated_points_give_zero() {
        let k = KernelSpec::rbf(0.5).unwrap();
        let x = vec![SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap(); 10];
        assert!(mmd2_estimate(&x, &x, &k).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn separated_vertices() {
        let k = KernelSpec::rbf(0.5).unwrap();
        let p = vec![SimplexPoint::from_weights_clamped(&[1.0, 0.0, 0.0]).unwrap(); 5];
        let q = vec![SimplexPoint::from_weights_clamped(&[0.0, 1.0, 0.0]).unwrap(); 5];
        let analytic = 2.0 - 2.0 * (-2.0f64 / (2.0 * 0.25)).exp();
        let v = mmd2_estimate(&p, &q, &k).unwrap();
        assert!(v > 0.5);
        assert!((v - analytic).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_differences() {
        let k = KernelSpec::rbf_plus_poly(0.4).unwrap();
        let p = cloud(&[1.0, 2.0, 3.0], 8, 6);
        let q: Vec<Vec<f64>> = cloud(&[2.0, 1.0, 1.0], 5, 7).into_iter().map(|s| s.into_vec()).collect();
        let g = mmd2_grad_q(&p, &q, &k, None).unwrap();
        for i in 0..q.len() {
            for j in 0..3 {
                let h = 1e-6;
                let mut up = q.clone();
                let mut dn = q.clone();
                up[i][j] += h;
                dn[i][j] -= h;
                let fd = (mmd2_estimate(&p, &up, &k).unwrap() - mmd2_estimate(&p, &dn, &k).unwrap()) / (2.0 * h);
                assert!((fd - g.grad_q[i][j]).abs() < 1e-8, "{fd} vs {}", g.grad_q[i][j]);
            }
        }
    }

    /// Gamma draw by inverting the CDF at a fixed uniform, so the draw is a
    /// smooth function of the shape.
    fn gamma_quantile_ln(shape: f64, u: f64) -> f64 {
        let (mut lo, mut hi) = (-745.0f64, 10.0 + 2.0 * shape.max(1.0).ln() + shape);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::numerics::gamma_cdf(shape, mid.exp()).unwrap() < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn crn_samples(alpha: &[f64], us: &[Vec<f64>]) -> ReparamSamples {
        use crate::numerics::random::simplex_from_log_gammas;
        let draws: Vec<_> = us
            .iter()
            .map(|u| {
                let lg: Vec<f64> = alpha.iter().zip(u).map(|(&a, &v)| gamma_quantile_ln(a, v)).collect();
                crate::numerics::DirichletDraw { point: simplex_from_log_gammas(&lg).unwrap(), log_gammas: lg }
            })
            .collect();
        let log_gamma_grads =
            draws.iter().map(|d| crate::numerics::dirichlet_log_gamma_grads(d, alpha).unwrap()).collect();
        ReparamSamples { draws, log_gamma_grads }
    }

    #[test]
    fn reparameterized_gradient_matches_common_random_numbers() {
        let k = KernelSpec::rbf_plus_poly(0.3).unwrap();
        let p = cloud(&[4.0, 2.0, 1.5], 100, 11);
        let mut rng = RngState::new(12);
        let us: Vec<Vec<f64>> = (0..512).map(|_| (0..3).map(|_| rng.open_uniform()).collect()).collect();
        let alpha = [1.2, 2.5, 3.0];
        let (_, g) = mmd_alpha_grad(&p, &crn_samples(&alpha, &us), &k, None).unwrap();
        for j in 0..3 {
            let h = 1e-4 * alpha[j];
            let mut up = alpha;
            let mut dn = alpha;
            up[j] += h;
            dn[j] -= h;
            let f = |a: &[f64]| mmd2_estimate(&p, &crn_samples(a, &us).points(), &k).unwrap();
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 0.02 * fd.abs(), "component {j}: {fd} vs {}", g[j]);
        }
    }

    fn constant_student(logits: [f64; 3], g0: f64) -> StudentModel {
        use crate::nnet::{Activation, MlpParams};
        let mut pm = MlpParams::zeros(&[1, 3], Activation::Relu, Activation::Softmax).unwrap();
        pm.layers_mut()[0].bias = logits.to_vec();
        let mut cm = MlpParams::zeros(&[1, 1], Activation::Relu, Activation::Identity).unwrap();
        cm.layers_mut()[0].bias[0] = g0;
        StudentModel::new(pm, cm).unwrap()
    }

    fn averaged_mmd(m: &StudentModel, p: &[SimplexPoint], k: &KernelSpec, rng: &mut RngState) -> f64 {
        let alpha = crate::student::student_alpha(m, &[1.0]).unwrap();
        (0..20)
            .map(|_| {
                let q: Vec<_> = (0..64).map(|_| sample_dirichlet(&alpha, rng).unwrap()).collect();
                mmd2_estimate(p, &q, k).unwrap()
            })
            .sum::<f64>()
            / 20.0
    }

    #[test]
    fn mmd_steps_shrink_the_discrepancy() {
        use crate::nnet::AdamConfig;
        let pts = cloud(&[5.0, 5.0, 5.0], 200, 13);
        let c = ParticleCloud::new(0, pts.clone()).unwrap();
        let k = KernelSpec::rbf_plus_poly(crate::losses::median_heuristic(&pts)).unwrap();
        let mut m = constant_student([0.8, -0.5, 0.0], 0.0);
        let mut rng = RngState::new(14);
        let before = averaged_mmd(&m, &pts, &k, &mut rng);
        let mut opt = StudentOpt::new(&m, AdamConfig::with_lr(0.02));
        for _ in 0..1000 {
            mmd_step(&mut m, &[1.0], &c, &k, 32, &mut opt, &mut rng).unwrap();
        }
        let after = averaged_mmd(&m, &pts, &k, &mut rng);
        assert!(after <= 0.1 * before, "before {before}, after {after}");
    }

    #[test]
    fn matched_student_stays_in_noise_band() {
        use crate::nnet::AdamConfig;
        let pts = cloud(&[5.0, 5.0, 5.0], 200, 15);
        let c = ParticleCloud::new(0, pts.clone()).unwrap();
        let k = KernelSpec::rbf_plus_poly(crate::losses::median_heuristic(&pts)).unwrap();
        let m0 = constant_student([0.0; 3], 15f64.ln());
        let mut rng = RngState::new(16);
        let reps: Vec<f64> = (0..30)
            .map(|_| mmd_loss_grads(&m0, &[1.0], &c, &k, 32, None, &mut rng).unwrap().0)
            .collect();
        let mean = reps.iter().sum::<f64>() / 30.0;
        let sd = (reps.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 29.0).sqrt();
        let mut m = m0.clone();
        let mut opt = StudentOpt::new(&m, AdamConfig::with_lr(1e-3));
        let trace: Vec<f64> = (0..100).map(|_| mmd_step(&mut m, &[1.0], &c, &k, 32, &mut opt, &mut rng).unwrap()).collect();
        let tail = trace[80..].iter().sum::<f64>() / 20.0;
        assert!((tail - mean).abs() <= 3.0 * sd, "tail {tail}, band {mean} ± {sd}");
    }
}

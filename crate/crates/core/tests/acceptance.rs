//! Acceptance suite: one PASS/FAIL line per criterion, run serially so the
//! timing criterion is not disturbed by other checks.
//!
//! Run with `cargo test -p opu-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use opu_core::data::{gen_synthetic, BlobSpec, Dataset, Split, SyntheticData};
use opu_core::eval::{
    aupr, auroc, gap_against, misc_task, ood_task, timing_harness, GapConfig, Scorer, ScoredExample,
};
use opu_core::losses::{
    critic_objective_grads, distill, kl_loss, kl_loss_grads, mmd2_estimate, mmd_alpha_grad, CriticModel,
    DistillConfig, KernelSpec, LossKind, PenaltyPairs, ReparamSamples, TraceRecord,
};
use opu_core::nnet::{mlp_backward, mlp_forward, softmax, Activation, MlpParams};
use opu_core::numerics::random::simplex_from_log_gammas;
use opu_core::numerics::{
    dirichlet_log_gamma_grads, digamma, gamma_cdf, implicit_grad_gamma, ln_gamma, sample_dirichlet, sample_gamma,
    sample_polya_gamma, DirichletDraw, DirichletParams, RngState, SimplexPoint,
};
use opu_core::student::{
    fit_dirichlet_mmd, student_alpha, student_predict, uncertainty_scores, Measure, StudentModel,
};
use opu_core::teachers::{
    blr_pg_gibbs, mc_predict, mcdp_sample, mcdp_train, pushforward, pushforward_all, sgld_run, BlrConfig,
    LogisticTarget, McdpConfig, McdpDropout, ParticleCloud, PosteriorSampleSet, PosteriorSamples, SgldConfig,
    StepSchedule,
};
use statrs::distribution::{Beta, ContinuousCDF};

type Check = Result<String, String>;

/// Collects sub-check failures so a criterion reports all of them at once.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(self) -> Check {
        if self.failures.is_empty() {
            Ok(self.notes.join("; "))
        } else {
            Err(self.failures.join("; "))
        }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// One-sample Kolmogorov–Smirnov statistic.
fn ks_one(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn ks_two(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// KS critical value at significance `level` for effective sample size `n`.
fn ks_critical(level: f64, n: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / n.sqrt()
}

fn gamma_quantile_ln(shape: f64, u: f64) -> f64 {
    let (mut lo, mut hi) = (-745.0f64, 10.0 + 2.0 * shape.max(1.0).ln() + shape);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_cdf(shape, mid.exp()).unwrap() < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut c = Checks::default();
    let euler = 0.577_215_664_901_532_9;
    c.check(ln_gamma(1.0).unwrap().abs() < 1e-14, "ln_gamma(1)");
    c.check((ln_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-13, "ln_gamma(5)");
    c.check((ln_gamma(0.5).unwrap() - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13, "ln_gamma(1/2)");
    c.check((digamma(1.0).unwrap() + euler).abs() < 1e-12, "digamma(1)");
    c.check((digamma(2.0).unwrap() - (1.0 - euler)).abs() < 1e-12, "digamma(2)");
    c.check((digamma(0.5).unwrap() + euler + 2.0 * 2f64.ln()).abs() < 1e-12, "digamma(1/2)");
    for x in log_grid(1e-3, 1e5, 200) {
        let r = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap() - x.ln();
        c.check(r.abs() <= 1e-10, format!("ln_gamma recurrence at {x}: {r:e}"));
        let r = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        c.check(r.abs() <= 1e-9, format!("digamma recurrence at {x}: {r:e}"));
    }
    c.check(gamma_cdf(1.0, 0.0).unwrap() == 0.0, "gamma_cdf(1, 0)");
    c.check((gamma_cdf(1.0, 1.0).unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-14, "gamma_cdf(1, 1)");
    // trapezoid rule on the density after the substitution x = t², which
    // removes the square-root behaviour at zero
    let shape = 2.5;
    let norm = ln_gamma(shape).unwrap().exp();
    let n = 200_000;
    let b = 3.7f64.sqrt();
    let f = |t: f64| 2.0 * t * (t * t).powf(shape - 1.0) * (-t * t).exp() / norm;
    let h = b / n as f64;
    let quad = h * ((1..n).map(|i| f(i as f64 * h)).sum::<f64>() + 0.5 * (f(0.0) + f(b)));
    c.check((gamma_cdf(shape, 3.7).unwrap() - quad).abs() < 1e-9, format!("gamma_cdf(2.5, 3.7) vs quadrature {quad}"));
    for a in [1e-3f64, 0.2, 1.0, 3.5, 40.0, 2000.0] {
        let mut prev = 0.0;
        for z in log_grid(1e-6 * a.max(1e-2), 50.0 * a.max(1.0), 300) {
            let p = gamma_cdf(a, z).unwrap();
            c.check(p >= prev, format!("gamma_cdf({a}, ·) decreases at {z}"));
            prev = p;
        }
        c.check(gamma_cdf(a, 1e8 * a).unwrap() >= 1.0 - 1e-9, format!("gamma_cdf({a}, ∞) < 1"));
    }

    let n = 100_000;
    let mut rng = RngState::new(101);
    let g: Vec<f64> = (0..n).map(|_| sample_gamma(3.0, &mut rng).unwrap()).collect();
    let (m, sd) = mean_sd(&g);
    c.check((m - 3.0).abs() <= 3.0 * sd / (n as f64).sqrt(), format!("Gamma(3) mean {m}"));
    c.check((sd * sd - 3.0).abs() <= 0.1, format!("Gamma(3) variance {}", sd * sd));
    let below = (0..n).filter(|_| sample_gamma(1.0, &mut rng).unwrap() <= 1.0).count() as f64 / n as f64;
    c.check((below - gamma_cdf(1.0, 1.0).unwrap()).abs() <= 0.005, format!("Gamma(1) CDF at 1: {below}"));

    for alpha in [vec![1.0, 1.0, 1.0], vec![2.0, 3.0, 5.0]] {
        let a = DirichletParams::new(alpha.clone()).unwrap();
        let a0: f64 = alpha.iter().sum();
        let draws: Vec<SimplexPoint> = (0..n).map(|_| sample_dirichlet(&a, &mut rng).unwrap()).collect();
        for (k, &ak) in alpha.iter().enumerate() {
            let col: Vec<f64> = draws.iter().map(|p| p.probs()[k]).collect();
            let (m, sd) = mean_sd(&col);
            c.check((m - ak / a0).abs() <= 3.0 * sd / (n as f64).sqrt(), format!("Dir{alpha:?} mean {k}: {m}"));
            let beta = Beta::new(ak, a0 - ak).unwrap();
            let d = ks_one(col, |x| beta.cdf(x));
            c.check(d <= ks_critical(1e-3, n as f64), format!("Dir{alpha:?} marginal {k} KS {d}"));
        }
    }
    let sparse = DirichletParams::new(vec![0.1, 0.1]).unwrap();
    let frac = (0..n)
        .filter(|_| sample_dirichlet(&sparse, &mut rng).unwrap().probs().iter().cloned().fold(0.0, f64::max) > 0.9)
        .count() as f64
        / n as f64;
    let expected = 2.0 * (1.0 - Beta::new(0.1, 0.1).unwrap().cdf(0.9));
    c.check(frac > 0.5 && (frac - expected).abs() < 0.01, format!("Dir(0.1, 0.1) P(max > 0.9) = {frac}, oracle {expected}"));

    for cc in [0.0, 2.0] {
        let w: Vec<f64> = (0..n).map(|_| sample_polya_gamma(cc, &mut rng).unwrap()).collect();
        let (m, sd) = mean_sd(&w);
        let exact = if cc == 0.0 { 0.25 } else { (cc / 2.0f64).tanh() / (2.0 * cc) };
        c.check((m - exact).abs() <= 3.0 * sd / (n as f64).sqrt(), format!("PG(1, {cc}) mean {m} vs {exact}"));
    }
    let pos: Vec<f64> = (0..20_000).map(|_| sample_polya_gamma(2.0, &mut rng).unwrap()).collect();
    let neg: Vec<f64> = (0..20_000).map(|_| sample_polya_gamma(-2.0, &mut rng).unwrap()).collect();
    let d = ks_two(pos, neg);
    c.check(d <= ks_critical(1e-3, 10_000.0), format!("PG(1, ±2) two-sample KS {d}"));

    let grads: Vec<f64> = (0..n).map(|_| implicit_grad_gamma(sample_gamma(3.0, &mut rng).unwrap(), 3.0).unwrap()).collect();
    let (m, _) = mean_sd(&grads);
    c.check((m - 1.0).abs() <= 0.02, format!("E[dz/dα] at shape 3 = {m}"));
    let h = 1e-4;
    let q = |a: f64| gamma_quantile_ln(a, 0.5).exp();
    let fd = (q(1.0 + h) - q(1.0 - h)) / (2.0 * h);
    let g = implicit_grad_gamma(2f64.ln(), 1.0).unwrap();
    c.check((g - fd).abs() <= 1e-5 * fd.abs(), format!("implicit gradient at the Exp(1) median {g} vs {fd}"));
    for &shape in &[0.05, 0.5, 1.0, 3.0, 50.0] {
        for &z in &[0.01 * shape, 0.5 * shape, shape, 3.0 * shape] {
            c.check(implicit_grad_gamma(z, shape).unwrap() > 0.0, format!("implicit gradient sign at ({z}, {shape})"));
        }
    }

    let (mut a, mut b) = (RngState::new(9), RngState::new(9));
    let same = (0..100).all(|_| {
        sample_gamma(0.7, &mut a).unwrap() == sample_gamma(0.7, &mut b).unwrap()
            && sample_polya_gamma(1.3, &mut a).unwrap() == sample_polya_gamma(1.3, &mut b).unwrap()
    });
    c.check(same, "samplers are not deterministic under equal seeds");
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 120.0, format!("runtime {secs:.1}s ≥ 120s"));
    c.note(format!("identities, recurrences, moments and KS tests in {secs:.1}s"));
    c.finish()
}

/// Central differences of `f` over a flat parameter vector, compared entry
/// by entry with `grad`. Returns the worst relative error.
fn fd_check(theta: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        t[i] = theta[i] + h;
        let up = f(&t);
        t[i] = theta[i] - h;
        let dn = f(&t);
        t[i] = theta[i];
        let fd = (up - dn) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = RngState::new(201);
    let archs: [(&[usize], Activation); 5] = [
        (&[2, 64, 64, 3], Activation::Softmax),
        (&[2, 64, 64, 1], Activation::Identity),
        (&[4, 8, 8, 3], Activation::Softmax),
        (&[3, 16, 1], Activation::Identity),
        (&[1, 3], Activation::Softmax),
    ];
    for (sizes, out) in archs {
        let mut net = MlpParams::init(sizes, Activation::Relu, out, &mut rng).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.normal()).collect();
            let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.normal()).collect();
            let (_, tape) = mlp_forward(&net, &x, None).unwrap();
            let grad = mlp_backward(&net, &tape, &w).unwrap().grads.to_flat();
            let theta = net.to_flat();
            let mut probe = net.clone();
            let worst = fd_check(&theta, &grad, |t| {
                probe.set_flat(t).unwrap();
                let y = mlp_forward(&probe, &x, None).unwrap().0;
                y.iter().zip(&w).map(|(a, b)| a * b).sum()
            });
            c.check(worst <= 1e-3, format!("backprop {sizes:?}: rel. error {worst:e}"));
            net = MlpParams::init(sizes, Activation::Relu, out, &mut rng).unwrap();
        }
    }

    // critic composition, value and gradient-penalty terms together
    let critic = CriticModel::init(2, 3, 8, &mut rng).unwrap();
    let a = DirichletParams::new(vec![2.0, 1.0, 3.0]).unwrap();
    let b = DirichletParams::new(vec![1.0, 4.0, 1.0]).unwrap();
    let p: Vec<SimplexPoint> = (0..12).map(|_| sample_dirichlet(&a, &mut rng).unwrap()).collect();
    let q: Vec<SimplexPoint> = (0..10).map(|_| sample_dirichlet(&b, &mut rng).unwrap()).collect();
    let x = [0.3, -0.7];
    let pairs = PenaltyPairs::sample(p.len(), q.len(), 12, &mut rng);
    let (_, _, g) = critic_objective_grads(&critic, &x, &p, &q, 10.0, &pairs).unwrap();
    let grad: Vec<f64> = [g.nn1.to_flat(), g.nn2.to_flat(), g.nn3.to_flat()].concat();
    let sizes = [critic.nn1.param_count(), critic.nn2.param_count()];
    let theta: Vec<f64> = [critic.nn1.to_flat(), critic.nn2.to_flat(), critic.nn3.to_flat()].concat();
    let mut probe = critic.clone();
    let worst = fd_check(&theta, &grad, |t| {
        probe.nn1.set_flat(&t[..sizes[0]]).unwrap();
        probe.nn2.set_flat(&t[sizes[0]..sizes[0] + sizes[1]]).unwrap();
        probe.nn3.set_flat(&t[sizes[0] + sizes[1]..]).unwrap();
        critic_objective_grads(&probe, &x, &p, &q, 10.0, &pairs).unwrap().0
    });
    c.check(worst <= 1e-3, format!("critic objective: rel. error {worst:e}"));

    // KL loss through both student networks
    let m = StudentModel::init(2, &[8, 8], &[8], 3, &mut rng).unwrap();
    let cloud_alpha = DirichletParams::new(vec![3.0, 1.5, 2.0]).unwrap();
    let cloud = ParticleCloud::new(0, (0..50).map(|_| sample_dirichlet(&cloud_alpha, &mut rng).unwrap()).collect()).unwrap();
    let x = [0.4, 1.1];
    let (_, g) = kl_loss_grads(&m, &x, &cloud).unwrap();
    let n_pm = m.pm.param_count();
    let grad = [g.pm.to_flat(), g.cm.to_flat()].concat();
    let theta = [m.pm.to_flat(), m.cm.to_flat()].concat();
    let mut probe = m.clone();
    let worst = fd_check(&theta, &grad, |t| {
        probe.pm.set_flat(&t[..n_pm]).unwrap();
        probe.cm.set_flat(&t[n_pm..]).unwrap();
        kl_loss(&student_alpha(&probe, &x).unwrap(), &cloud).unwrap()
    });
    c.check(worst <= 1e-3, format!("KL step: rel. error {worst:e}"));

    // MMD through the reparameterized samples, common random numbers
    let k = KernelSpec::rbf_plus_poly(0.3).unwrap();
    let target = DirichletParams::new(vec![4.0, 2.0, 1.5]).unwrap();
    let p: Vec<SimplexPoint> = (0..100).map(|_| sample_dirichlet(&target, &mut rng).unwrap()).collect();
    let us: Vec<Vec<f64>> = (0..512).map(|_| (0..3).map(|_| rng.open_uniform()).collect()).collect();
    let crn = |alpha: &[f64]| {
        let draws: Vec<DirichletDraw> = us
            .iter()
            .map(|u| {
                let lg: Vec<f64> = alpha.iter().zip(u).map(|(&a, &v)| gamma_quantile_ln(a, v)).collect();
                DirichletDraw { point: simplex_from_log_gammas(&lg).unwrap(), log_gammas: lg }
            })
            .collect();
        let log_gamma_grads = draws.iter().map(|d| dirichlet_log_gamma_grads(d, alpha).unwrap()).collect();
        ReparamSamples { draws, log_gamma_grads }
    };
    let alpha = [1.2, 2.5, 3.0];
    let (_, g) = mmd_alpha_grad(&p, &crn(&alpha), &k, None).unwrap();
    for j in 0..3 {
        let h = 1e-4 * alpha[j];
        let (mut up, mut dn) = (alpha, alpha);
        up[j] += h;
        dn[j] -= h;
        let f = |a: &[f64]| mmd2_estimate(&p, &crn(a).points(), &k).unwrap();
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        let rel = (fd - g[j]).abs() / fd.abs();
        c.check(rel <= 0.02, format!("MMD CRN component {j}: rel. error {rel:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 300.0, format!("runtime {secs:.1}s ≥ 300s"));
    c.note(format!("backprop, critic, KL and MMD gradients in {secs:.1}s"));
    c.finish()
}

fn brute_auroc(e: &[ScoredExample]) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for a in e.iter().filter(|e| e.label) {
        for b in e.iter().filter(|e| !e.label) {
            s += if a.score > b.score { 1.0 } else if a.score == b.score { 0.5 } else { 0.0 };
            n += 1.0;
        }
    }
    s / n
}

fn brute_aupr(e: &[ScoredExample]) -> f64 {
    let mut thresholds: Vec<f64> = e.iter().map(|e| e.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = e.iter().filter(|e| e.label).count() as f64;
    let (mut area, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = e.iter().filter(|e| e.label && e.score >= t).count() as f64;
        let all = e.iter().filter(|e| e.score >= t).count() as f64;
        area += (tp / pos - prev_recall) * tp / all;
        prev_recall = tp / pos;
    }
    area
}

fn criterion_3() -> Check {
    let mut c = Checks::default();
    let mut rng = RngState::new(301);
    let k = KernelSpec::rbf_plus_poly(0.4).unwrap();
    for trial in 0..5 {
        let a = DirichletParams::new(vec![1.0 + trial as f64, 2.0, 0.5]).unwrap();
        let p: Vec<SimplexPoint> = (0..20).map(|_| sample_dirichlet(&a, &mut rng).unwrap()).collect();
        let q: Vec<SimplexPoint> = (0..20).map(|_| sample_dirichlet(&a, &mut rng).unwrap()).collect();
        let (n, m) = (20.0, 20.0);
        let (mut pp, mut qq, mut pq) = (0.0, 0.0, 0.0);
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    pp += k.eval(p[i].probs(), p[j].probs());
                    qq += k.eval(q[i].probs(), q[j].probs());
                }
                pq += k.eval(p[i].probs(), q[j].probs());
            }
        }
        let brute = pp / (n * (n - 1.0)) + qq / (m * (m - 1.0)) - 2.0 * pq / (n * m);
        let est = mmd2_estimate(&p, &q, &k).unwrap();
        c.check((est - brute).abs() <= 1e-12, format!("MMD² {est} vs brute force {brute}"));
    }
    let ex = |v: &[(f64, bool)]| v.iter().map(|&(s, l)| ScoredExample::new(s, l)).collect::<Vec<_>>();
    let fixed = [
        (ex(&[(0.1, false), (0.4, true), (0.35, false), (0.8, true)]), 1.0),
        (ex(&[(0.9, false), (0.4, true), (0.35, false), (0.8, true)]), 0.5),
    ];
    for (e, want) in &fixed {
        c.check(auroc(e).unwrap() == *want, format!("AUROC fixed case, want {want}"));
    }
    let six = ex(&[(0.9, true), (0.8, false), (0.8, true), (0.5, false), (0.3, true), (0.1, false)]);
    let instances = [
        fixed[0].0.clone(),
        fixed[1].0.clone(),
        six,
        (0..40).map(|i| ScoredExample::new(((i * 7) % 5) as f64, i % 3 == 0)).collect(),
    ];
    for e in &instances {
        let (a, b) = (auroc(e).unwrap(), brute_auroc(e));
        c.check((a - b).abs() <= 1e-15, format!("AUROC {a} vs pair oracle {b}"));
        let (a, b) = (aupr(e).unwrap(), brute_aupr(e));
        c.check((a - b).abs() <= 1e-15, format!("AUPR {a} vs threshold oracle {b}"));
    }
    c.note("MMD² on 20-point sets and AUROC/AUPR oracles agree");
    c.finish()
}

fn criterion_4() -> Check {
    let mut c = Checks::default();
    let mut rng = RngState::new(5);
    let f: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.normal()]).collect();
    let l: Vec<usize> = f.iter().map(|x| usize::from(rng.uniform() < opu_core::teachers::logistic(1.5 * x[0]))).collect();
    let data = Dataset::new("1d", Split::Train, f, Some(l)).unwrap();
    let gibbs = blr_pg_gibbs(
        &data,
        &BlrConfig { prior_precision: 1.0, burn_in: 200, samples: 5000, thin: 1, intercept: false },
        &mut RngState::new(6),
    )
    .unwrap();
    let PosteriorSamples::Blr { thetas, .. } = &gibbs.samples else { unreachable!() };
    let g: Vec<f64> = thetas.iter().map(|t| t[0]).collect();
    let target = LogisticTarget { data: &data, prior_precision: 1.0, intercept: false };
    let cfg = SgldConfig {
        step: StepSchedule::Constant { eps: 2e-3 },
        batch_size: 10,
        burn_in: 2000,
        samples: 40_000,
        thin: 1,
        prior_precision: 1.0,
    };
    let s: Vec<f64> = sgld_run(&target, vec![0.0], &cfg, &mut RngState::new(7)).unwrap().iter().map(|t| t[0]).collect();
    let (gm, gs) = mean_sd(&g);
    let (sm, ss) = mean_sd(&s);
    c.check((sm - gm).abs() <= 0.15 * gm.abs(), format!("SGLD mean {sm:.3} vs PG-Gibbs {gm:.3}"));
    c.check((ss - gs).abs() <= 0.15 * gs, format!("SGLD sd {ss:.3} vs PG-Gibbs {gs:.3}"));
    c.note(format!("mean {sm:.3}/{gm:.3}, sd {ss:.3}/{gs:.3}"));
    let n = 100_000;
    let mut rng = RngState::new(401);
    for cc in [0.0f64, 1.0, -1.0, 2.0, -2.0] {
        let w: Vec<f64> = (0..n).map(|_| sample_polya_gamma(cc, &mut rng).unwrap()).collect();
        let (m, sd) = mean_sd(&w);
        let exact = if cc == 0.0 { 0.25 } else { (cc / 2.0).tanh() / (2.0 * cc) };
        let z = (m - exact) / (sd / (n as f64).sqrt());
        c.check(z.abs() <= 3.0, format!("PG(1, {cc}) mean {m:.5} vs {exact:.5}"));
    }
    c.finish()
}

/// The desk-scale scenario shared by criteria 5, 6 and 8.
struct Scenario {
    data: SyntheticData,
    samples: PosteriorSampleSet,
    timing_samples: PosteriorSampleSet,
    clouds: Vec<ParticleCloud>,
    initial: StudentModel,
    student: StudentModel,
    kernel: KernelSpec,
    seconds: f64,
}

const SEED: u64 = 1;

fn scenario() -> Scenario {
    let start = Instant::now();
    let spec = BlobSpec {
        k: 3,
        per_class: 100,
        centers: None,
        radius: 2.0,
        std: 0.8,
        ood_offset: 15.0,
        ood_direction: None,
        ood_count: None,
    };
    let root = RngState::new(SEED);
    let data = gen_synthetic(&spec, &mut root.split(0)).unwrap();
    let dropout = McdpDropout { rate: 0.2, input: true };
    let train = McdpConfig { steps: 3000, batch_size: 32, lr: 0.05, weight_decay: 1e-4 };
    let net = mcdp_train(&data.train, &[2, 64, 64, 3], dropout, &train, &mut root.split(1)).unwrap();
    let samples = mcdp_sample(&net, dropout, 200, &mut root.split(2)).unwrap();
    let clouds = pushforward_all(&samples, &data.distill.features).unwrap();
    let mut initial = StudentModel::init(2, &[64, 64], &[64, 64], 3, &mut root.split(3)).unwrap();
    initial.pm = net.clone();
    initial.reset_concentration(3.0);
    let mut cfg = DistillConfig::new(LossKind::Mmd, 4000, SEED + 4);
    cfg.optimizer.lr = 1e-3;
    let out = distill(initial.clone(), &data.distill.features, &clouds, &cfg).unwrap();
    let timing_samples = mcdp_sample(&net, dropout, 400, &mut root.split(5)).unwrap();
    Scenario {
        data,
        samples,
        timing_samples,
        clouds,
        initial,
        student: out.model,
        kernel: out.kernel.unwrap(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criterion_5(s: &Scenario) -> Check {
    let start = Instant::now();
    let mut c = Checks::default();
    let test = &s.data.test;
    let labels = test.labels().unwrap();
    let accuracy = |predict: &dyn Fn(&[f64]) -> usize| {
        test.features.iter().zip(labels).filter(|(x, &y)| predict(x) == y).count() as f64 / test.len() as f64
    };
    let teacher = accuracy(&|x| mc_predict(&pushforward(&s.samples, 0, x).unwrap()).argmax());
    let student = accuracy(&|x| student_predict(&s.student, x).unwrap().argmax());
    c.check((teacher - student).abs() <= 0.02, format!("accuracy student {student:.3} vs teacher {teacher:.3}"));
    let scorer = |measure: Measure| {
        Scorer::new("opu-mmd", measure.tag(), move |x: &[f64]| Ok(uncertainty_scores(&s.student, x)?.score(measure)))
    };
    let ood = ood_task(&scorer(Measure::C), &test.features, &s.data.ood.features).unwrap();
    c.check(ood.auroc >= 0.95, format!("OOD AUROC (C) {:.3} < 0.95", ood.auroc));
    let predict = |x: &[f64]| Ok(student_predict(&s.student, x)?);
    let misc = misc_task(predict, &scorer(Measure::P), test).unwrap();
    c.check(misc.auroc >= 0.80, format!("MisC AUROC (P) {:.3} < 0.80", misc.auroc));
    let secs = s.seconds + start.elapsed().as_secs_f64();
    c.check(secs < 600.0, format!("runtime {secs:.1}s ≥ 600s"));
    c.note(format!(
        "accuracy {student:.3} vs teacher {teacher:.3}, OOD AUROC (C) {:.3}, MisC AUROC (P) {:.3}, {secs:.1}s",
        ood.auroc, misc.auroc
    ));
    c.finish()
}

fn criterion_6(s: &Scenario) -> Check {
    let mut c = Checks::default();
    let inputs = &s.data.test.features;
    let r100 = timing_harness(&s.timing_samples, &s.student, inputs, 100).unwrap();
    let r200 = timing_harness(&s.timing_samples, &s.student, inputs, 200).unwrap();
    let r400 = timing_harness(&s.timing_samples, &s.student, inputs, 400).unwrap();
    c.check(r200.speedup >= 50.0, format!("speedup at S=200 is {:.1}", r200.speedup));
    let scaling = r400.speedup / r100.speedup;
    c.check(scaling >= 1.5, format!("speedup ratio S=400/S=100 is {scaling:.2}"));
    c.note(format!(
        "speedup {:.0}x at S=100, {:.0}x at S=200, {:.0}x at S=400 (ratio {scaling:.2})",
        r100.speedup, r200.speedup, r400.speedup
    ));
    c.finish()
}

/// Mean loss over the last fifth of the trace against the fifth before it:
/// a plateau when they differ by at most two standard errors of the
/// difference, or by a relative 1e-6 for noise-free losses.
fn plateau(trace: &[TraceRecord]) -> (bool, f64, f64) {
    let n = trace.len() / 5;
    let stats = |r: &[TraceRecord]| mean_sd(&r.iter().map(|t| t.loss).collect::<Vec<_>>());
    let (a, sa) = stats(&trace[trace.len() - 2 * n..trace.len() - n]);
    let (b, sb) = stats(&trace[trace.len() - n..]);
    let se = ((sa * sa + sb * sb) / n as f64).sqrt();
    ((b - a).abs() <= (2.0 * se).max(1e-6 * b.abs()), a, b)
}

/// 90% of the particles form an interior mode near vertex 1, the rest a
/// tight mode at vertex 2, as a saturated softmax would produce.
fn bimodal_cloud() -> ParticleCloud {
    let mut rng = RngState::new(5);
    let main = DirichletParams::new(vec![30.0, 10.0, 10.0]).unwrap();
    let points = (0..200)
        .map(|i| {
            if i < 20 {
                let z: Vec<f64> = (0..3).map(|k| if k == 1 { 8.0 } else { 0.0 } + rng.normal()).collect();
                SimplexPoint::from_weights_clamped(&softmax(&z)).unwrap()
            } else {
                sample_dirichlet(&main, &mut rng).unwrap()
            }
        })
        .collect();
    ParticleCloud::new(0, points).unwrap()
}

fn criterion_7() -> Check {
    let mut c = Checks::default();
    let cloud = bimodal_cloud();
    let x = vec![1.0];
    let mut a0 = Vec::new();
    for kind in [LossKind::Kl, LossKind::Mmd] {
        let mut m = StudentModel::init(1, &[8], &[8], 3, &mut RngState::new(1)).unwrap();
        m.reset_concentration(1.0);
        let mut cfg = DistillConfig::new(kind, 6000, 3);
        cfg.optimizer.lr = 0.01;
        let out = distill(m, std::slice::from_ref(&x), std::slice::from_ref(&cloud), &cfg).unwrap();
        let (flat, before, after) = plateau(&out.trace);
        c.check(flat, format!("{} loss not at a plateau: {before:.5} then {after:.5}", kind.name()));
        a0.push(student_alpha(&out.model, &x).unwrap().precision());
    }
    c.check(a0[0] < a0[1], format!("KL α₀ {:.2} is not below MMD α₀ {:.2}", a0[0], a0[1]));
    c.note(format!("α₀ KL {:.2} < MMD {:.2}", a0[0], a0[1]));
    c.finish()
}

fn criterion_8(s: &Scenario) -> Check {
    let start = Instant::now();
    let mut c = Checks::default();
    let cfg = GapConfig::default();
    let mut rng = RngState::new(SEED).split(6);
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut violations = 0usize;
    for (x, cloud) in s.data.distill.features.iter().zip(&s.clouds) {
        let fit = fit_dirichlet_mmd(cloud, &s.kernel, &cfg.fit, &mut rng).unwrap();
        // paired: both students see the same evaluation draws
        let fork = rng.split(cloud.input_id as u64 + 100);
        for (m, out) in [(&s.initial, &mut before), (&s.student, &mut after)] {
            let mut r = fork.clone();
            let g = gap_against(m, x, cloud, &s.kernel, &fit.alpha, &cfg, &mut r).unwrap();
            if g.delta < -2.0 * g.noise_bound {
                violations += 1;
            }
            out.push(g.delta);
        }
    }
    let mb = before.iter().sum::<f64>() / before.len() as f64;
    let ma = after.iter().sum::<f64>() / after.len() as f64;
    c.check(ma <= mb, format!("mean gap after {ma:.4} > before {mb:.4}"));
    c.check(violations == 0, format!("{violations} inputs with Δ̂ < −2·noise"));
    c.note(format!(
        "mean Δ̂ {mb:.4} before, {ma:.4} after over {} inputs, no Δ̂ below −2·noise, {:.1}s",
        before.len(),
        start.elapsed().as_secs_f64()
    ));
    c.finish()
}

fn main() -> ExitCode {
    // `cargo test --test acceptance -- 5 7` runs a subset; libtest flags such
    // as --nocapture are accepted and ignored
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut failed = 0;
    let mut line = |n: usize, r: Check| match r {
        Ok(msg) => println!("criterion {n}: PASS  {msg}"),
        Err(msg) => {
            failed += 1;
            println!("criterion {n}: FAIL  {msg}");
        }
    };
    let mut shared: Option<Scenario> = None;
    for n in (1..=8).filter(|&n| wanted(n)) {
        let r = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            7 => criterion_7(),
            _ => {
                let s = shared.get_or_insert_with(scenario);
                match n {
                    5 => criterion_5(s),
                    6 => criterion_6(s),
                    _ => criterion_8(s),
                }
            }
        };
        line(n, r);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Seeded random streams and the Gamma, Dirichlet and Polya-Gamma samplers.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use super::simplex::{DirichletParams, SimplexPoint, SIMPLEX_FLOOR};
use super::special::ln_normal_cdf;
use super::NumericsError;

/// A seeded, single-owner random stream.
///
/// Streams are ChaCha8 generators. [`RngState::split`] derives an
/// independent stream from the same seed by selecting a different ChaCha
/// stream id, so parallel workers never share a generator.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `stream` of this seed. Splitting the same seed
    /// with the same stream id always yields the same sequence.
    pub fn split(&self, stream: u64) -> RngState {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        RngState { seed: self.seed, inner }
    }

    /// Uniform draw in the open interval (0, 1].
    pub fn open_uniform(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn exponential(&mut self) -> f64 {
        self.inner.sample(Exp1)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draw from Gamma(shape, rate 1).
pub fn sample_gamma(shape: f64, rng: &mut RngState) -> Result<f64, NumericsError> {
    Ok(sample_log_gamma(shape, rng)?.exp())
}

/// Log of a Gamma(shape, 1) draw.
///
/// Marsaglia–Tsang squeeze/rejection for shape ≥ 1; for shape < 1 a
/// Gamma(shape + 1) draw is boosted by U^{1/shape}. Working in log space
/// keeps tiny-shape draws representable.
pub fn sample_log_gamma(shape: f64, rng: &mut RngState) -> Result<f64, NumericsError> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(NumericsError::Domain { function: "sample_gamma", value: shape });
    }
    if shape < 1.0 {
        let boosted = marsaglia_tsang(shape + 1.0, rng);
        return Ok(boosted + rng.open_uniform().ln() / shape);
    }
    Ok(marsaglia_tsang(shape, rng))
}

fn marsaglia_tsang(shape: f64, rng: &mut RngState) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open_uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// A Dirichlet draw together with the log-Gamma variates it was built
/// from; the variates are what reparameterized gradients differentiate.
#[derive(Debug, Clone)]
pub struct DirichletDraw {
    pub point: SimplexPoint,
    pub log_gammas: Vec<f64>,
}

/// Normalize independent Gamma(α_k) draws onto the simplex.
pub fn sample_dirichlet(alpha: &DirichletParams, rng: &mut RngState) -> Result<SimplexPoint, NumericsError> {
    Ok(sample_dirichlet_draw(alpha, rng)?.point)
}

pub fn sample_dirichlet_draw(alpha: &DirichletParams, rng: &mut RngState) -> Result<DirichletDraw, NumericsError> {
    const MAX_REDRAWS: usize = 100;
    for _ in 0..MAX_REDRAWS {
        let log_gammas = alpha
            .alpha()
            .iter()
            .map(|&a| sample_log_gamma(a, rng))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(point) = simplex_from_log_gammas(&log_gammas) {
            return Ok(DirichletDraw { point, log_gammas });
        }
    }
    Err(NumericsError::Underflow { draws: MAX_REDRAWS })
}

/// Normalizes `exp(log_gammas)` and clamps into the open simplex. `None`
/// if the weights are not representable.
pub fn simplex_from_log_gammas(log_gammas: &[f64]) -> Option<SimplexPoint> {
    let max = log_gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = log_gammas.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| (w / sum).max(SIMPLEX_FLOOR)).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Some(SimplexPoint::from_vec_unchecked(probs))
}

/// Default bound on Polya-Gamma rejection iterations.
pub const PG_MAX_ITERATIONS: usize = 10_000;

const PG_TRUNC: f64 = 0.64;

/// Exact draw from PG(1, c) with the default iteration bound.
pub fn sample_polya_gamma(c: f64, rng: &mut RngState) -> Result<f64, NumericsError> {
    sample_polya_gamma_bounded(c, PG_MAX_ITERATIONS, rng)
}

/// Exact draw from PG(1, c) by Devroye's alternating-series method on the
/// tilted Jacobi density J*(1, |c|/2); PG(1, c) = J*(1, |c|/2) / 4.
pub fn sample_polya_gamma_bounded(c: f64, max_iterations: usize, rng: &mut RngState) -> Result<f64, NumericsError> {
    if !c.is_finite() {
        return Err(NumericsError::Domain { function: "sample_polya_gamma", value: c });
    }
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = pg_mass_texpon(z);
    let mut iterations = 0usize;
    loop {
        let x = if rng.uniform() < p_exp {
            PG_TRUNC + rng.exponential() / fz
        } else {
            pg_truncated_inverse_gaussian(z, rng)
        };
        let mut s = pg_coefficient(0, x);
        let y = rng.uniform() * s;
        let mut n = 0usize;
        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Err(NumericsError::IterationCap { sampler: "polya_gamma", bound: max_iterations });
            }
            n += 1;
            if n % 2 == 1 {
                s -= pg_coefficient(n, x);
                if y <= s {
                    return Ok(0.25 * x);
                }
            } else {
                s += pg_coefficient(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Piecewise coefficient a_n(x) of the Jacobi density series.
fn pg_coefficient(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > PG_TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the right (truncated exponential) piece.
fn pg_mass_texpon(z: f64) -> f64 {
    let t = PG_TRUNC;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_normal_cdf(b);
    let xa = x0 + z + ln_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian(1/z, 1) draw truncated to (0, t).
fn pg_truncated_inverse_gaussian(z: f64, rng: &mut RngState) -> f64 {
    let t = PG_TRUNC;
    if z < 1.0 / t {
        // mean beyond the truncation point: 1/chi^2 proposal with rejection
        loop {
            let (mut e1, mut e2) = (rng.exponential(), rng.exponential());
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.exponential();
                e2 = rng.exponential();
            }
            let x = t / ((1.0 + e1 * t) * (1.0 + e1 * t));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.uniform() <= alpha {
                return x;
            }
        }
    }
    let mu = 1.0 / z;
    loop {
        let y = rng.normal();
        let mu_y = mu * y * y;
        let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
        if rng.uniform() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x <= t {
            return x;
        }
    }
}

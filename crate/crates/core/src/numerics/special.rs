//! Special functions: log-gamma, digamma, trigamma and the regularized
//! incomplete gamma function.

use super::NumericsError;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Lanczos parameter g.
const LANCZOS_G: f64 = 7.0;

/// Lanczos series coefficients (g = 7, n = 9).
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Stirling series coefficients B_{2k} / (2k (2k-1)).
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Above this argument the Stirling series is used instead of Lanczos.
const STIRLING_CUTOFF: f64 = 15.0;

const SERIES_MAX_ITER: usize = 200_000;
const CF_MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

fn check_positive(name: &'static str, x: f64) -> Result<(), NumericsError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::Domain { function: name, value: x })
    }
}

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64, NumericsError> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x >= STIRLING_CUTOFF {
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        let mut corr = 0.0;
        let mut pow = inv;
        for c in STIRLING_COEFFS {
            corr += c * pow;
            pow *= inv2;
        }
        // Leading terms with their rounding errors carried separately.
        let xm = x - 0.5;
        let (l_big, l_small) = ln_split(x);
        let p1 = xm * l_big;
        let e1 = xm.mul_add(l_big, -p1);
        let p2 = xm * l_small;
        let e2 = xm.mul_add(l_small, -p2);
        let (s, e3) = two_sum(p1, p2);
        let (lead, e4) = two_sum(s, -x);
        lead + (HALF_LN_2PI + corr + e1 + e2 + e3 + e4)
    } else if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos sum in its accurate range.
        ln_gamma_lanczos(x + 1.0) - x.ln()
    } else {
        ln_gamma_lanczos(x)
    }
}

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// ln x as `big + small` with `big` a multiple of the high part of ln 2.
fn ln_split(x: f64) -> (f64, f64) {
    let bits = x.to_bits();
    let mut e = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    if m > std::f64::consts::SQRT_2 {
        m *= 0.5;
        e += 1;
    }
    let e = e as f64;
    (e * LN2_HI, e.mul_add(LN2_LO, (m - 1.0).ln_1p()))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn ln_gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS[1..].iter().enumerate() {
        sum += c / (z + (i + 1) as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_2PI + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64, NumericsError> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x - 1/(2x) - Σ B_{2k} / (2k x^{2k})
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(x) for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64, NumericsError> {
    check_positive("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * 691.0 / 2730.0)))));
    acc + series
}

/// Inverse of the digamma function, by Newton iteration from Minka's
/// starting point.
pub fn inv_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y + 0.577_215_664_901_532_9)
    };
    for _ in 0..50 {
        let step = (digamma_unchecked(x) - y) / trigamma_unchecked(x);
        let mut next = x - step;
        if next <= 0.0 {
            next = x * 0.5;
        }
        if ((next - x) / x).abs() < 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

/// Regularized lower incomplete gamma P(shape, z).
pub fn gamma_cdf(shape: f64, z: f64) -> Result<f64, NumericsError> {
    check_positive("gamma_cdf(shape)", shape)?;
    if z.is_nan() || z < 0.0 {
        return Err(NumericsError::Domain { function: "gamma_cdf(z)", value: z });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(1.0);
    }
    Ok(ln_gamma_p(shape, z.ln())?.exp())
}

/// ln P(shape, z), with `z` given by its logarithm so tiny draws do not
/// underflow.
pub fn ln_gamma_p(shape: f64, ln_z: f64) -> Result<f64, NumericsError> {
    let z = ln_z.exp();
    if z < shape + 1.0 {
        lower_series(shape, ln_z)
    } else {
        let lq = upper_continued_fraction(shape, ln_z)?;
        Ok((-lq.exp()).ln_1p())
    }
}

/// ln Q(shape, z) = ln(1 - P(shape, z)).
pub fn ln_gamma_q(shape: f64, ln_z: f64) -> Result<f64, NumericsError> {
    let z = ln_z.exp();
    if z < shape + 1.0 {
        let lp = lower_series(shape, ln_z)?;
        Ok((-lp.exp()).ln_1p())
    } else {
        upper_continued_fraction(shape, ln_z)
    }
}

fn lower_series(a: f64, ln_z: f64) -> Result<f64, NumericsError> {
    let z = ln_z.exp();
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut converged = false;
    for n in 1..SERIES_MAX_ITER {
        term *= z / (a + n as f64);
        sum += term;
        if term < sum * 1e-17 {
            converged = true;
            break;
        }
    }
    if !converged && z > 0.0 {
        return Err(NumericsError::NoConvergence { function: "ln_gamma_p", shape: a, z });
    }
    Ok(a * ln_z - z - ln_gamma_unchecked(a) + sum.ln())
}

fn upper_continued_fraction(a: f64, ln_z: f64) -> Result<f64, NumericsError> {
    let z = ln_z.exp();
    let mut b = z + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..CF_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(a * ln_z - z - ln_gamma_unchecked(a) + h.ln());
        }
    }
    Err(NumericsError::NoConvergence { function: "ln_gamma_q", shape: a, z })
}

/// Log-density of Gamma(shape, rate 1) at `exp(ln_z)`.
pub fn gamma_ln_pdf(shape: f64, ln_z: f64) -> f64 {
    (shape - 1.0) * ln_z - ln_z.exp() - ln_gamma_unchecked(shape)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log of the standard normal CDF, accurate in the far left tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > -20.0 {
        normal_cdf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - HALF_LN_2PI + (-1.0 / x2 + 2.5 / (x2 * x2)).ln_1p()
    }
}

//! Special functions backing the test statistics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (k, &coef) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += coef / (x + k as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma `Q(s, x) = Γ(s, x) / Γ(s)`.
pub fn gamma_q(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !(x >= 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!(
            "gamma_q domain error: s={s}, x={x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        Ok(1.0 - gamma_p_series(s, x)?)
    } else {
        gamma_q_continued_fraction(s, x)
    }
}

fn gamma_p_series(s: f64, x: f64) -> Result<f64> {
    let mut ap = s;
    let mut term = 1.0 / s;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            return Ok(sum * (-x + s * x.ln() - ln_gamma(s)).exp());
        }
    }
    Err(Error::Numerical(format!(
        "incomplete gamma series did not converge (s={s}, x={x})"
    )))
}

// Modified Lentz evaluation of the Legendre continued fraction.
fn gamma_q_continued_fraction(s: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            return Ok((-x + s * x.ln() - ln_gamma(s)).exp() * h);
        }
    }
    Err(Error::Numerical(format!(
        "incomplete gamma continued fraction did not converge (s={s}, x={x})"
    )))
}

/// Survival function of the chi-square distribution.
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    gamma_q(dof / 2.0, x / 2.0)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

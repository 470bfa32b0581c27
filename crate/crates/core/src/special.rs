//! Scalar special functions and numerically careful primitives.
//!
//! `digamma` and `trigamma` shift the argument upward with the recurrence
//! until it is at least [`ASYMPTOTIC_THRESHOLD`] and then apply the
//! asymptotic (Bernoulli-number) series. `log_beta` switches to a Stirling
//! form with explicit `ln1p` handling once the larger argument is big, so it
//! stays finite for arguments close to `f64::MAX`.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 6.0;
const STIRLING_THRESHOLD: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x >= STIRLING_THRESHOLD {
        (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x)
    } else {
        statrs::function::gamma::ln_gamma(x)
    }
}

/// Remainder of Stirling's series, `ln Γ(x) − [(x−½)ln x − x + ½ln 2π]`.
fn stirling_tail(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0
                    + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 * (1.0 / 156.0)))))))
}

/// `ln B(a, b)`.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "log_beta requires positive arguments, got ({a}, {b})"
        )));
    }
    Ok(log_beta_unchecked(a, b))
}

/// `ln B(a, b)` without the argument check; callers guarantee `a, b > 0`.
pub(crate) fn log_beta_unchecked(a: f64, b: f64) -> f64 {
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    if large < STIRLING_THRESHOLD {
        return ln_gamma(small) + ln_gamma(large) - ln_gamma(small + large);
    }
    // ln Γ(large) − ln Γ(small + large) without forming huge intermediates.
    let ratio = small / large;
    let l1p = ratio.ln_1p();
    let tail = stirling_tail(large) - stirling_tail(small + large);
    if small < STIRLING_THRESHOLD {
        let diff = -(large - 0.5) * l1p - small * (large.ln() + l1p) + small + tail;
        ln_gamma(small) + diff
    } else {
        small * ratio.ln() - 0.5 * small.ln() + HALF_LN_2PI
            - small * l1p
            - (large - 0.5) * l1p
            + stirling_tail(small)
            + tail
    }
}

/// Digamma function ψ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r2
        * (1.0 / 12.0
            - r2 * (1.0 / 120.0
                - r2 * (1.0 / 252.0
                    - r2 * (1.0 / 240.0
                        - r2 * (1.0 / 132.0
                            - r2 * (691.0 / 32_760.0 - r2 * (1.0 / 12.0 - r2 * 3617.0 / 8160.0)))))));
    acc + x.ln() - 0.5 * r - series
}

/// Trigamma function ψ′(x) for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("trigamma requires x > 0, got {x}")));
    }
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0
                    - r2 * (1.0 / 42.0
                        - r2 * (1.0 / 30.0
                            - r2 * (5.0 / 66.0 - r2 * (691.0 / 2730.0 - r2 * (7.0 / 6.0)))))));
    acc + series
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile; `p` must lie in `(0, 1)`.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Upper tail of the χ² distribution with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::erf::erfc((x / 2.0).sqrt())
}

/// Regularized incomplete beta function `I_x(a, b)`, i.e. the beta CDF.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        statrs::function::beta::beta_reg(a, b, x)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

//! Link functions for the three submodels.

use crate::error::{Error, Result};
use crate::special::{expit, logit};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `ln(x / (1 − x))` on `(0, 1)`.
    Logit,
    /// `ln(−ln(1 − x))` on `(0, 1)`.
    Cloglog,
    /// `ln x` on `(0, ∞)`.
    Log,
}

impl Link {
    pub fn evaluate(self, x: f64) -> f64 {
        match self {
            Link::Logit => logit(x),
            Link::Cloglog => (-(-x).ln_1p()).ln(),
            Link::Log => x.ln(),
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => expit(eta),
            Link::Cloglog => -(-eta.exp()).exp_m1(),
            Link::Log => eta.exp(),
        }
    }

    /// `(x, 1 − x)` at `x = g⁻¹(η)`, each accurate when the other is near 1.
    pub fn inverse_pair(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => (expit(eta), expit(-eta)),
            Link::Cloglog => {
                let e = eta.exp();
                (-(-e).exp_m1(), (-e).exp())
            }
            Link::Log => {
                let x = eta.exp();
                (x, 1.0 - x)
            }
        }
    }

    /// `g′(x)`, the derivative of the link with respect to its argument.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Logit => 1.0 / (x * (1.0 - x)),
            Link::Cloglog => -1.0 / ((1.0 - x) * (-x).ln_1p()),
            Link::Log => 1.0 / x,
        }
    }

    /// `dx/dη` at `η = g(x)`, i.e. `1 / g′(x)`, evaluated stably from `η`.
    pub fn inverse_derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logit => expit(eta) * expit(-eta),
            Link::Cloglog => {
                let e = eta.exp();
                e * (-e).exp()
            }
            Link::Log => eta.exp(),
        }
    }

    fn unit_interval(self) -> bool {
        matches!(self, Link::Logit | Link::Cloglog)
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Cloglog => "cloglog",
            Link::Log => "log",
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "cloglog" => Ok(Link::Cloglog),
            "log" => Ok(Link::Log),
            other => Err(Error::Input(format!("unknown link `{other}` (expected logit, cloglog or log)"))),
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Links for the inflation probability, the conditional mean and the precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub theta: Link,
    pub mu: Link,
    pub phi: Link,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            theta: Link::Logit,
            mu: Link::Logit,
            phi: Link::Log,
        }
    }
}

impl LinkSpec {
    pub fn new(theta: Link, mu: Link, phi: Link) -> Result<Self> {
        if !theta.unit_interval() {
            return Err(Error::Input(format!("link `{theta}` cannot map the inflation probability")));
        }
        if !mu.unit_interval() {
            return Err(Error::Input(format!("link `{mu}` cannot map the conditional mean")));
        }
        if phi != Link::Log {
            return Err(Error::Input(format!("precision link must be log, got `{phi}`")));
        }
        Ok(Self { theta, mu, phi })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trips() {
        for link in [Link::Logit, Link::Cloglog] {
            for &x in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
                let back = link.inverse(link.evaluate(x));
                assert!((back - x).abs() < 1e-12, "{link} {x} {back}");
            }
        }
        for &x in &[1e-3, 0.5, 2.0, 90.0, 1e4] {
            let back = Link::Log.inverse(Link::Log.evaluate(x));
            assert!((back - x).abs() <= 1e-12 * x);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for link in [Link::Logit, Link::Cloglog] {
            for &x in &[0.05, 0.4, 0.9] {
                let h = 1e-6;
                let fd = (link.evaluate(x + h) - link.evaluate(x - h)) / (2.0 * h);
                assert!((fd - link.derivative(x)).abs() / fd.abs() < 1e-7);
                let eta = link.evaluate(x);
                assert!((link.inverse_derivative(eta) * link.derivative(x) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn strictly_monotone() {
        for link in [Link::Logit, Link::Cloglog] {
            let mut prev = f64::NEG_INFINITY;
            for k in 1..100 {
                let v = link.evaluate(k as f64 / 100.0);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(LinkSpec::new(Link::Log, Link::Logit, Link::Log).is_err());
        assert!(LinkSpec::new(Link::Logit, Link::Logit, Link::Logit).is_err());
        assert!(LinkSpec::new(Link::Cloglog, Link::Logit, Link::Log).is_ok());
        assert_eq!("LOGIT".parse::<Link>().unwrap(), Link::Logit);
        assert!("probit".parse::<Link>().is_err());
    }
}

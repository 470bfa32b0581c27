//! Densities, conditional moments, linear predictors and the factorized log-likelihood.

use crate::data::{Inflation, ObservationSet, ParamVector};
use crate::error::{Error, Result, Submodel};
use crate::link::LinkSpec;
use crate::special::{compensated_sum, digamma_unchecked, log1p_exp, log_beta_unchecked};
use nalgebra::{DMatrix, DVector};

/// Floor applied to ϑ and μ during optimization.
pub(crate) const PROB_FLOOR: f64 = 1e-12;
/// Bounds on the log-precision predictor during optimization.
pub(crate) const LOG_PHI_BOUND: f64 = 600.0;

fn check_mu_phi(mu: f64, phi: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("mean must lie in (0,1), got {mu}")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Domain(format!("precision must be positive and finite, got {phi}")));
    }
    Ok(())
}

/// `ln f(y; μ, φ)` for the mean/precision beta law.
pub fn beta_log_density(y: f64, mu: f64, phi: f64) -> Result<f64> {
    check_mu_phi(mu, phi)?;
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!("beta density needs y in (0,1), got {y}")));
    }
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    Ok(-log_beta_unchecked(a, b) + (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p())
}

/// `ln bi_c(y; ϑ, μ, φ)`.
pub fn inflated_log_density(y: f64, c: Inflation, theta: f64, mu: f64, phi: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("inflation probability must lie in (0,1), got {theta}")));
    }
    if y == c.value() {
        return Ok(theta.ln());
    }
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!(
            "y = {y} lies outside (0,1) ∪ {{{}}}",
            c.value()
        )));
    }
    Ok((-theta).ln_1p() + beta_log_density(y, mu, phi)?)
}

/// `ln h(y*; μ, φ)`, the density of `logit(Y)` for `Y ~ beta(μ, φ)`.
pub fn logit_beta_log_density(y_star: f64, mu: f64, phi: f64) -> Result<f64> {
    check_mu_phi(mu, phi)?;
    Ok(log_h(y_star, mu, phi))
}

#[inline]
pub(crate) fn log_h(t: f64, mu: f64, phi: f64) -> f64 {
    -log_beta_unchecked(mu * phi, (1.0 - mu) * phi) - t * (1.0 - mu) * phi - phi * log1p_exp(-t)
}

/// `(μ*, μ†)`: the means of `logit(Y)` and `ln(1 − Y)`.
pub fn conditional_moments(mu: f64, phi: f64) -> (f64, f64) {
    let psi_a = digamma_unchecked(mu * phi);
    let psi_b = digamma_unchecked((1.0 - mu) * phi);
    (psi_a - psi_b, psi_b - digamma_unchecked(phi))
}

/// `∫ h(t; μ, φ)^a dt = B(aμφ, a(1−μ)φ) / B(μφ, (1−μ)φ)^a`.
pub fn power_integral(mu: f64, phi: f64, a: f64) -> f64 {
    let p = mu * phi;
    let q = (1.0 - mu) * phi;
    (log_beta_unchecked(a * p, a * q) - a * log_beta_unchecked(p, q)).exp()
}

/// Per-observation parameters implied by `υ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictors {
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

fn eta(m: &DMatrix<f64>, coef: &[f64]) -> DVector<f64> {
    m * DVector::from_column_slice(coef)
}

/// `ϑ_i = g_ϑ⁻¹(S_iᵀκ)`, `μ_i = g_μ⁻¹(X_iᵀβ)`, `φ_i = g_φ⁻¹(Z_iᵀγ)`.
pub fn linear_predictors(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector) -> Result<Predictors> {
    ups.check_dims(obs)?;
    let mut out = Predictors {
        theta: Vec::with_capacity(obs.n()),
        mu: Vec::with_capacity(obs.n()),
        phi: Vec::with_capacity(obs.n()),
    };
    let parts = [
        (eta(obs.s(), &ups.kappa), links.theta, Submodel::Discrete),
        (eta(obs.x(), &ups.beta), links.mu, Submodel::Mean),
        (eta(obs.z(), &ups.gamma), links.phi, Submodel::Precision),
    ];
    for (e, link, sub) in parts {
        let target = match sub {
            Submodel::Discrete => &mut out.theta,
            Submodel::Mean => &mut out.mu,
            Submodel::Precision => &mut out.phi,
        };
        for (row, &v) in e.iter().enumerate() {
            let value = link.inverse(v);
            if !v.is_finite() || !value.is_finite() {
                return Err(Error::NonFinitePredictor { submodel: sub, row: row + 1 });
            }
            target.push(value);
        }
    }
    Ok(out)
}

/// Inverse link clamped into `[floor, 1 − floor]`; used only inside objectives.
#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Log-likelihood split into its Bernoulli and beta parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub ell: f64,
    pub ell1: f64,
    pub ell2: f64,
}

pub fn log_likelihood(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector) -> Result<LogLikelihood> {
    let pred = linear_predictors(obs, links, ups)?;
    let yc = &obs.partition().indicator;
    let mut ell1 = Vec::with_capacity(obs.n());
    for i in 0..obs.n() {
        let t = pred.theta[i];
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!("ϑ at row {} is {t}", i + 1)));
        }
        ell1.push(if yc[i] == 1.0 { t.ln() } else { (-t).ln_1p() });
    }
    let mut ell2 = Vec::with_capacity(obs.n_dagger());
    for &i in obs.continuous_indices() {
        ell2.push(beta_log_density(obs.y()[i], pred.mu[i], pred.phi[i])?);
    }
    let ell1 = compensated_sum(ell1);
    let ell2 = compensated_sum(ell2);
    Ok(LogLikelihood { ell: ell1 + ell2, ell1, ell2 })
}

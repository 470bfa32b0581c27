use super::{check_alpha_cont, continuous_rows, Accumulator};
use crate::data::ObservationSet;
use crate::error::Result;
use crate::link::LinkSpec;
use crate::model::{conditional_moments, log_h, power_integral};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmdpdePoint {
    pub log_h: f64,
    /// `h^α`.
    pub weight: f64,
    /// `K_{1+α}`.
    pub k: f64,
    /// `∂ ln h / ∂μ`.
    pub score_mu: f64,
    /// `∂ ln h / ∂φ`.
    pub score_phi: f64,
    /// `∫ (∂ ln h/∂μ) h^{1+α}`.
    pub expect_mu: f64,
    /// `∫ (∂ ln h/∂φ) h^{1+α}`.
    pub expect_phi: f64,
}

pub(crate) fn lmdpde_point(y_star: f64, y_dagger: f64, mu: f64, phi: f64, alpha: f64) -> LmdpdePoint {
    let (ms, md) = conditional_moments(mu, phi);
    let lh = log_h(y_star, mu, phi);
    let r = y_star - ms;
    let (k, expect_mu, expect_phi) = if alpha == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        let a = 1.0 + alpha;
        let (msa, mda) = conditional_moments(mu, a * phi);
        let k = power_integral(mu, phi, a);
        (k, phi * k * (msa - ms), k * (mu * (msa - ms) + (mda - md)))
    };
    LmdpdePoint {
        log_h: lh,
        weight: if alpha == 0.0 { 1.0 } else { (alpha * lh).exp() },
        k,
        score_mu: phi * r,
        score_phi: mu * r + (y_dagger - md),
        expect_mu,
        expect_phi,
    }
}

/// `(−n/(1+α))·H_n` and its gradient `Σ [U h^α − 𝓔]`.
pub(crate) fn lmdpde_value_grad(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let p1 = obs.x().ncols();
    let mut acc = Accumulator::new(theta.len());
    for row in continuous_rows(obs, links, theta) {
        let pt = lmdpde_point(row.y_star, row.y_dagger, row.mu, row.phi, alpha);
        acc.add_value(if alpha == 0.0 { pt.log_h } else { pt.weight / alpha - pt.k / (1.0 + alpha) });
        let gm = (pt.weight * pt.score_mu - pt.expect_mu) * row.dmu;
        let gp = (pt.weight * pt.score_phi - pt.expect_phi) * row.dphi;
        acc.add_row(0, gm, obs.x().row(row.index).iter());
        acc.add_row(p1, gp, obs.z().row(row.index).iter());
    }
    acc.finish()
}

/// `H_n(θ) = n⁻¹ Σ_{i∈℘} [K_{i,1+α} − ((1+α)/α) h_i^α]`; at `α = 0` the negative mean log-likelihood.
pub fn lmdpde_objective(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> Result<f64> {
    check_alpha_cont(alpha)?;
    let v = lmdpde_value_grad(obs, links, theta, alpha).0;
    Ok(-(1.0 + alpha) * v / obs.n() as f64)
}

/// `Σ_{i∈℘} [U(y_i; θ) h_i^α − 𝓔_i] = −(n/(1+α)) ∇H_n`.
pub fn lmdpde_estfun(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> Result<DVector<f64>> {
    check_alpha_cont(alpha)?;
    Ok(DVector::from_vec(lmdpde_value_grad(obs, links, theta, alpha).1))
}

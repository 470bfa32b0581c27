use super::{check_alpha_cont, continuous_rows, Accumulator};
use crate::data::ObservationSet;
use crate::error::Result;
use crate::link::LinkSpec;
use crate::model::{conditional_moments, log_h};
use nalgebra::DVector;

/// Per-observation pieces of the surrogate estimator at precision `φ`
/// (the model precision; the working precision is `φ/(1−α)`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct LsmlePoint {
    /// `ln h*(y*)`, evaluated at the working precision.
    pub log_h: f64,
    /// `h*^α`.
    pub weight: f64,
    /// `∂ ln h* / ∂μ`.
    pub score_mu: f64,
    /// `∂ ln h* / ∂φ`, chained through `φ_w = φ/(1−α)`.
    pub score_phi: f64,
}

pub(crate) fn lsmle_point(y_star: f64, y_dagger: f64, mu: f64, phi: f64, alpha: f64) -> LsmlePoint {
    let scale = 1.0 / (1.0 - alpha);
    let phi_w = phi * scale;
    let (ms, md) = conditional_moments(mu, phi_w);
    let lh = log_h(y_star, mu, phi_w);
    let r = y_star - ms;
    LsmlePoint {
        log_h: lh,
        weight: if alpha == 0.0 { 1.0 } else { (alpha * lh).exp() },
        score_mu: phi_w * r,
        score_phi: (mu * r + (y_dagger - md)) * scale,
    }
}

pub(crate) fn lsmle_value_grad(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let p1 = obs.x().ncols();
    let mut acc = Accumulator::new(theta.len());
    for row in continuous_rows(obs, links, theta) {
        let pt = lsmle_point(row.y_star, row.y_dagger, row.mu, row.phi, alpha);
        acc.add_value(if alpha == 0.0 { pt.log_h } else { (pt.weight - 1.0) / alpha });
        acc.add_row(0, pt.weight * pt.score_mu * row.dmu, obs.x().row(row.index).iter());
        acc.add_row(p1, pt.weight * pt.score_phi * row.dphi, obs.z().row(row.index).iter());
    }
    acc.finish()
}

/// `Σ_{i∈℘} L_{1−α}(h*(y_i*; μ_i, φ_i))` with `L_{1−α}(u) = (u^α − 1)/α` and `ln u` at `α = 0`.
pub fn lsmle_objective(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> Result<f64> {
    check_alpha_cont(alpha)?;
    Ok(lsmle_value_grad(obs, links, theta, alpha).0)
}

/// `Σ_{i∈℘} U*(y_i*; θ) h*^α`, the gradient of [`lsmle_objective`].
pub fn lsmle_estfun(obs: &ObservationSet, links: &LinkSpec, theta: &[f64], alpha: f64) -> Result<DVector<f64>> {
    check_alpha_cont(alpha)?;
    Ok(DVector::from_vec(lsmle_value_grad(obs, links, theta, alpha).1))
}

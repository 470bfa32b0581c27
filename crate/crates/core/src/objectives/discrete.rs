use super::Accumulator;
use crate::data::ObservationSet;
use crate::error::Result;
use crate::link::LinkSpec;
use nalgebra::DVector;

struct DiscreteRow {
    yc: f64,
    theta: f64,
    /// `1 − ϑ`, carried separately so far-out rows keep their precision.
    theta_c: f64,
    dtheta: f64,
}

fn rows<'a>(obs: &'a ObservationSet, links: &'a LinkSpec, kappa: &'a [f64]) -> impl Iterator<Item = DiscreteRow> + 'a {
    let yc = &obs.partition().indicator;
    (0..obs.n()).map(move |i| {
        let eta: f64 = obs.s().row(i).iter().zip(kappa).map(|(a, b)| a * b).sum();
        let (theta, theta_c) = links.theta.inverse_pair(eta);
        DiscreteRow {
            yc: yc[i],
            theta,
            theta_c,
            dtheta: links.theta.inverse_derivative(eta),
        }
    })
}

/// `(−n·H_n, Σ U*)`: value to maximize and its gradient.
pub(crate) fn discrete_value_grad(obs: &ObservationSet, links: &LinkSpec, kappa: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let mut acc = Accumulator::new(kappa.len());
    for (i, r) in rows(obs, links, kappa).enumerate() {
        let (t, q) = (r.theta, r.theta_c);
        let f = if r.yc == 1.0 { t } else { q };
        let v = if alpha == 0.0 {
            f.max(f64::MIN_POSITIVE).ln()
        } else {
            let a1 = 1.0 + alpha;
            (a1 / alpha) * f.powf(alpha) - t.powf(a1) - q.powf(a1)
        };
        acc.add_value(v);
        acc.add_row(0, score_pair(r.yc, t, q, alpha) * r.dtheta, obs.s().row(i).iter());
    }
    acc.finish()
}

fn score_pair(indicator: f64, t: f64, q: f64, alpha: f64) -> f64 {
    let (f, sign) = if indicator == 1.0 { (t, 1.0) } else { (q, -1.0) };
    if alpha == 0.0 {
        return sign / f;
    }
    (1.0 + alpha) * (sign * f.powf(alpha - 1.0) - t.powf(alpha) + q.powf(alpha))
}

/// Per-observation `U*` as a derivative in `ϑ`; the Bernoulli score at `α = 0`.
pub fn discrete_score(indicator: f64, theta: f64, alpha: f64) -> f64 {
    score_pair(indicator, theta, 1.0 - theta, alpha)
}

/// `H_n(κ) = n⁻¹ Σ V_i`; at `α = 0` the negative mean Bernoulli log-likelihood.
pub fn mdpde_disc_objective(obs: &ObservationSet, links: &LinkSpec, kappa: &[f64], alpha: f64) -> Result<f64> {
    super::check_alpha_disc(alpha)?;
    Ok(-discrete_value_grad(obs, links, kappa, alpha).0 / obs.n() as f64)
}

/// `Σ U*(y_iᶜ; κ) = −n ∇H_n`.
pub fn mdpde_disc_estfun(obs: &ObservationSet, links: &LinkSpec, kappa: &[f64], alpha: f64) -> Result<DVector<f64>> {
    super::check_alpha_disc(alpha)?;
    Ok(DVector::from_vec(discrete_value_grad(obs, links, kappa, alpha).1))
}

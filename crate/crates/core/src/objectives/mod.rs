//! Objective functions and estimating functions for every estimator.
//!
//! All estimators split into a discrete part in `κ` and a continuous part in
//! `θ = (β, γ)`. Each part exposes its objective as written in the literature
//! (minimized or maximized) and its estimating function. The optimizer works
//! with a single orientation: the `*_value_grad` helpers return a value to be
//! maximized together with its exact gradient, which is the estimating
//! function itself.

mod discrete;
mod lmdpde;
mod lsmle;
mod ml;

pub use discrete::{discrete_score, mdpde_disc_estfun, mdpde_disc_objective};
pub use lmdpde::{lmdpde_estfun, lmdpde_objective};
pub use lsmle::{lsmle_estfun, lsmle_objective};
pub use ml::mle_score;

pub(crate) use discrete::discrete_value_grad;
pub(crate) use lmdpde::{lmdpde_point, lmdpde_value_grad};
pub(crate) use lsmle::{lsmle_point, lsmle_value_grad};

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::link::LinkSpec;
use crate::model::{clamp_prob, LOG_PHI_BOUND};
use crate::special::CompensatedSum;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// `h*^α · (∂/∂μ, ∂/∂φ) ln h*` at one logit response, with `h*` at the
/// working precision `φ/(1−α)`.
pub fn lsmle_psi(y_star: f64, mu: f64, phi: f64, alpha: f64) -> [f64; 2] {
    let p = lsmle_point(y_star, -crate::special::log1p_exp(y_star), mu, phi, alpha);
    [p.weight * p.score_mu, p.weight * p.score_phi]
}

/// `h^α · (∂/∂μ, ∂/∂φ) ln h` at one logit response.
pub fn lmdpde_psi(y_star: f64, mu: f64, phi: f64, alpha: f64) -> [f64; 2] {
    let p = lmdpde_point(y_star, -crate::special::log1p_exp(y_star), mu, phi, alpha);
    [p.weight * p.score_mu, p.weight * p.score_phi]
}

/// `∫ (∂/∂μ, ∂/∂φ) ln h · h^{1+α}`, the centring term of the LMDPDE.
pub fn lmdpde_centring(mu: f64, phi: f64, alpha: f64) -> [f64; 2] {
    let p = lmdpde_point(0.0, 0.0, mu, phi, alpha);
    [p.expect_mu, p.expect_phi]
}

/// Tuning constants of the discrete and continuous parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TuningConstants {
    pub alpha_disc: f64,
    pub alpha_cont: f64,
}

impl TuningConstants {
    pub fn new(alpha_disc: f64, alpha_cont: f64) -> Result<Self> {
        check_alpha_disc(alpha_disc)?;
        check_alpha_cont(alpha_cont)?;
        Ok(Self { alpha_disc, alpha_cont })
    }
}

pub(crate) fn check_alpha_disc(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Input(format!("discrete tuning constant must lie in [0,1], got {alpha}")));
    }
    Ok(())
}

pub(crate) fn check_alpha_cont(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Input(format!("continuous tuning constant must lie in [0,1), got {alpha}")));
    }
    Ok(())
}

/// Estimating function split into the `κ` block and the `θ = (β, γ)` block.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatingFunctionValue {
    pub u_kappa: DVector<f64>,
    pub u_theta: DVector<f64>,
}

/// Which continuous-part estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContinuousKind {
    Lsmle,
    Lmdpde,
}

/// Value (to maximize) and gradient of the continuous part.
pub(crate) fn continuous_value_grad(
    kind: ContinuousKind,
    obs: &ObservationSet,
    links: &LinkSpec,
    theta: &[f64],
    alpha: f64,
) -> (f64, Vec<f64>) {
    match kind {
        ContinuousKind::Lsmle => lsmle_value_grad(obs, links, theta, alpha),
        ContinuousKind::Lmdpde => lmdpde_value_grad(obs, links, theta, alpha),
    }
}

/// Per-observation quantities of the continuous part at `θ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ContinuousRow {
    pub index: usize,
    pub y_star: f64,
    pub y_dagger: f64,
    pub mu: f64,
    /// `g_φ⁻¹(Z_iᵀγ)`.
    pub phi: f64,
    /// `dμ/dη = 1/g′_μ(μ)`.
    pub dmu: f64,
    /// `dφ/dζ = 1/g′_φ(φ)`.
    pub dphi: f64,
}

/// Evaluates the continuous rows with the optimization floors applied.
pub(crate) fn continuous_rows(obs: &ObservationSet, links: &LinkSpec, theta: &[f64]) -> Vec<ContinuousRow> {
    let p1 = obs.x().ncols();
    let (beta, gamma) = theta.split_at(p1);
    let t = obs.transformed();
    obs.continuous_indices()
        .iter()
        .map(|&i| {
            let eta: f64 = obs.x().row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let zeta: f64 = obs.z().row(i).iter().zip(gamma).map(|(a, b)| a * b).sum();
            let zeta = zeta.clamp(-LOG_PHI_BOUND, LOG_PHI_BOUND);
            ContinuousRow {
                index: i,
                y_star: t.y_star[i],
                y_dagger: t.y_dagger[i],
                mu: clamp_prob(links.mu.inverse(eta)),
                phi: links.phi.inverse(zeta),
                dmu: links.mu.inverse_derivative(eta),
                dphi: links.phi.inverse_derivative(zeta),
            }
        })
        .collect()
}

/// Running value and gradient with compensated summation.
pub(crate) struct Accumulator {
    value: CompensatedSum,
    grad: Vec<CompensatedSum>,
}

impl Accumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            value: CompensatedSum::new(),
            grad: vec![CompensatedSum::new(); dim],
        }
    }

    pub fn add_value(&mut self, v: f64) {
        self.value.add(v);
    }

    /// Adds `w · row` to the gradient slice starting at `offset`.
    pub fn add_row<'a, I: IntoIterator<Item = &'a f64>>(&mut self, offset: usize, w: f64, row: I) {
        for (g, &r) in self.grad[offset..].iter_mut().zip(row) {
            g.add(w * r);
        }
    }

    pub fn finish(self) -> (f64, Vec<f64>) {
        (self.value.value(), self.grad.iter().map(|g| g.value()).collect())
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::data::{Inflation, ObservationSet};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution};

    /// Small inflated-beta sample with two-column designs everywhere.
    pub fn sample(n: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = DMatrix::<f64>::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let mut s = s;
        let mut x = DMatrix::<f64>::from_element(n, 2, 1.0);
        let mut z = DMatrix::<f64>::from_element(n, 2, 1.0);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            s[(i, 1)] = rng.random_range(-1.5..1.5);
            x[(i, 1)] = rng.random_range(0.0..1.0);
            z[(i, 1)] = rng.random_range(-1.0..1.0);
            let theta = 1.0 / (1.0 + (-(0.2 + s[(i, 1)])).exp());
            if rng.random::<f64>() < theta {
                y.push(0.0);
            } else {
                let mu = 1.0 / (1.0 + (-(-0.5 + x[(i, 1)])).exp());
                let phi = (2.5 + 0.5 * z[(i, 1)]).exp();
                let v: f64 = Beta::new(mu * phi, (1.0 - mu) * phi).unwrap().sample(&mut rng);
                y.push(v.clamp(1e-10, 1.0 - 1e-10));
            }
        }
        ObservationSet::new(Inflation::Zero, y, s, x, z).unwrap()
    }

    pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[j] += h;
                dn[j] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().map(|v| v.abs()).fold(1e-8, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
    }
}

//! Asymptotic covariance matrices and Wald-type tests.
//!
//! Every matrix is assembled as `Σ_i w_i · (design row cross-products)` from
//! scalar per-observation weights. The continuous-part sums run over all `n`
//! observations weighted by `1 − ϑ̂_i`.

use crate::data::{ObservationSet, ParamVector};
use crate::error::{Error, Result};
use crate::link::LinkSpec;
use crate::model::{conditional_moments, linear_predictors, power_integral, Predictors};
use crate::special::{chi2_1_sf, log_beta_unchecked, trigamma_unchecked};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceResult {
    /// Full `(p0+p1+p2)²` matrix, block-diagonal between `κ` and `θ`.
    pub v: DMatrix<f64>,
    pub se: DVector<f64>,
}

impl CovarianceResult {
    pub fn from_blocks(v_kappa: &DMatrix<f64>, v_theta: &DMatrix<f64>) -> Self {
        let p0 = v_kappa.nrows();
        let pt = v_theta.nrows();
        let mut v = DMatrix::zeros(p0 + pt, p0 + pt);
        v.view_mut((0, 0), (p0, p0)).copy_from(v_kappa);
        v.view_mut((p0, p0), (pt, pt)).copy_from(v_theta);
        let se = DVector::from_iterator(p0 + pt, v.diagonal().iter().map(|d| d.max(0.0).sqrt()));
        Self { v, se }
    }
}

/// Inverts a symmetric positive-definite matrix, naming the columns of the
/// weakest direction when it is numerically singular.
fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let (kmin, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Singular(format!("{what} is empty")))?;
    if !(max > 0.0) || min <= 1e-12 * max {
        let vec = eig.eigenvectors.column(kmin);
        let cols: Vec<String> = vec
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 0.3)
            .map(|(j, _)| (j + 1).to_string())
            .collect();
        return Err(Error::Singular(format!(
            "{what} is not invertible; near-collinear columns {}",
            cols.join(", ")
        )));
    }
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// `A⁻¹ B A⁻¹`, symmetrized.
fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = invert_spd(bread, what)?;
    let v = &inv * meat * &inv;
    Ok((&v + v.transpose()) * 0.5)
}

fn check_alpha(alpha: f64, upper_inclusive: bool) -> Result<()> {
    let ok = alpha >= 0.0 && if upper_inclusive { alpha <= 1.0 } else { alpha < 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Input(format!("tuning constant {alpha} out of range")))
    }
}

fn discrete_thetas(obs: &ObservationSet, links: &LinkSpec, kappa: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if kappa.len() != obs.s().ncols() {
        return Err(Error::Input("κ has the wrong length".into()));
    }
    let eta = obs.s() * DVector::from_column_slice(kappa);
    Ok(eta
        .iter()
        .map(|&e| {
            let (t, q) = links.theta.inverse_pair(e);
            (t, q, links.theta.inverse_derivative(e))
        })
        .collect())
}

/// `V_{κ,α} = A⁻¹ B A⁻¹` with `A = SᵀMΛT²S` and `B = SᵀM²ΛT²S`.
pub fn cov_discrete(obs: &ObservationSet, links: &LinkSpec, kappa: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha, true)?;
    let p0 = obs.s().ncols();
    let mut a = DMatrix::zeros(p0, p0);
    let mut b = DMatrix::zeros(p0, p0);
    for (i, (t, q, dt)) in discrete_thetas(obs, links, kappa)?.into_iter().enumerate() {
        let m = (1.0 + alpha) * (q * t.powf(alpha) + t * q.powf(alpha));
        let base = dt * dt / (t * q);
        let row = obs.s().row(i);
        let outer = row.transpose() * row;
        a += &outer * (m * base);
        b += &outer * (m * m * base);
    }
    sandwich(&a, &b, "discrete sensitivity matrix A")
}

/// Per-observation scalar weights of a 2×2 block matrix in (mean, precision).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BlockWeights {
    mm: f64,
    mp: f64,
    pp: f64,
}

fn accumulate(obs: &ObservationSet, rows: &[(usize, f64, BlockWeights)]) -> DMatrix<f64> {
    let p1 = obs.x().ncols();
    let p2 = obs.z().ncols();
    let mut out = DMatrix::zeros(p1 + p2, p1 + p2);
    for &(i, w, bw) in rows {
        let x = obs.x().row(i).transpose();
        let z = obs.z().row(i).transpose();
        let xx = &x * x.transpose();
        let xz = &x * z.transpose();
        let zz = &z * z.transpose();
        let mut view = out.view_mut((0, 0), (p1, p1));
        view += xx * (w * bw.mm);
        let mut view = out.view_mut((0, p1), (p1, p2));
        view += &xz * (w * bw.mp);
        let mut view = out.view_mut((p1, 0), (p2, p1));
        view += xz.transpose() * (w * bw.mp);
        let mut view = out.view_mut((p1, p1), (p2, p2));
        view += zz * (w * bw.pp);
    }
    out
}

struct ContinuousPoint {
    mu: f64,
    phi: f64,
    dmu: f64,
    dphi: f64,
}

fn continuous_points(obs: &ObservationSet, links: &LinkSpec, pred: &Predictors, beta: &[f64], gamma: &[f64]) -> Vec<ContinuousPoint> {
    let eta = obs.x() * DVector::from_column_slice(beta);
    let zeta = obs.z() * DVector::from_column_slice(gamma);
    (0..obs.n())
        .map(|i| ContinuousPoint {
            mu: pred.mu[i],
            phi: pred.phi[i],
            dmu: links.mu.inverse_derivative(eta[i]),
            dphi: links.phi.inverse_derivative(zeta[i]),
        })
        .collect()
}

/// Bread `−J` and meat `K` weights of the surrogate-likelihood estimator.
fn mlse_weights(p: &ContinuousPoint, alpha: f64) -> (BlockWeights, BlockWeights) {
    let (mu, phi_t) = (p.mu, p.phi);
    let phi_w = phi_t / (1.0 - alpha);
    let phi_a = (1.0 + alpha) * phi_w;
    let lb = |f: f64| log_beta_unchecked(mu * f, (1.0 - mu) * f);
    let b1 = ((1.0 - alpha) * lb(phi_w) - lb(phi_t)).exp();
    let b2 = (lb(phi_a) - 2.0 * alpha * lb(phi_w) - lb(phi_t)).exp();
    let tri = |f: f64| {
        let (ta, tb, tf) = (trigamma_unchecked(mu * f), trigamma_unchecked((1.0 - mu) * f), trigamma_unchecked(f));
        let v = ta + tb;
        let c = phi_w * (mu * ta - (1.0 - mu) * tb);
        let d = mu * mu * ta + (1.0 - mu) * (1.0 - mu) * tb - tf;
        (v, c, d)
    };
    let (v, c, d) = tri(phi_w);
    let (va, ca, da) = tri(phi_a);
    let (tm, tp) = (p.dmu, p.dphi);
    let q = 1.0 - alpha;
    let bread = BlockWeights {
        mm: q * b1 * tm * tm * phi_w * phi_w * v,
        mp: b1 * tm * tp * c,
        pp: b1 * tp * tp * d / q,
    };
    let meat = BlockWeights {
        mm: b2 * tm * tm * phi_w * phi_w * va,
        mp: b2 * tm * tp * ca / q,
        pp: b2 * tp * tp * da / (q * q),
    };
    (bread, meat)
}

/// `Λ^{(a)}` blocks and the `(Λ₁^{(a)}, Λ₂^{(a)})` expectation pair.
fn lambda_weights(p: &ContinuousPoint, a: f64) -> (BlockWeights, f64, f64) {
    let (mu, phi) = (p.mu, p.phi);
    let phi_a = a * phi;
    let k = power_integral(mu, phi, a);
    let (ms, md) = conditional_moments(mu, phi);
    let (msa, mda) = conditional_moments(mu, phi_a);
    let (d, dd) = (msa - ms, mda - md);
    let (ta, tb, tf) = (
        trigamma_unchecked(mu * phi_a),
        trigamma_unchecked((1.0 - mu) * phi_a),
        trigamma_unchecked(phi_a),
    );
    let va = ta + tb;
    let (tm, tp) = (p.dmu, p.dphi);
    let w = BlockWeights {
        mm: phi * phi * k * tm * tm * (va + d * d),
        mp: phi * k * tm * tp * (mu * (va + d * d) - tb + d * dd),
        pp: k * tp * tp * (mu * mu * ta + (1.0 - mu) * (1.0 - mu) * tb - tf + (mu * d + dd).powi(2)),
    };
    (w, phi * k * d * tm, k * (mu * d + dd) * tp)
}

fn mlme_weights(p: &ContinuousPoint, alpha: f64) -> (BlockWeights, BlockWeights) {
    let (bread, l1, l2) = lambda_weights(p, 1.0 + alpha);
    let (outer, _, _) = lambda_weights(p, 1.0 + 2.0 * alpha);
    let meat = BlockWeights {
        mm: outer.mm - l1 * l1,
        mp: outer.mp - l1 * l2,
        pp: outer.pp - l2 * l2,
    };
    (bread, meat)
}

fn continuous_cov(
    obs: &ObservationSet,
    links: &LinkSpec,
    ups: &ParamVector,
    alpha: f64,
    weights: fn(&ContinuousPoint, f64) -> (BlockWeights, BlockWeights),
    what: &str,
) -> Result<DMatrix<f64>> {
    check_alpha(alpha, false)?;
    let pred = linear_predictors(obs, links, ups)?;
    let pts = continuous_points(obs, links, &pred, &ups.beta, &ups.gamma);
    let mut bread_rows = Vec::with_capacity(obs.n());
    let mut meat_rows = Vec::with_capacity(obs.n());
    for (i, p) in pts.iter().enumerate() {
        let a = 1.0 - pred.theta[i];
        let (b, m) = weights(p, alpha);
        bread_rows.push((i, a, b));
        meat_rows.push((i, a, m));
    }
    sandwich(&accumulate(obs, &bread_rows), &accumulate(obs, &meat_rows), what)
}

/// `V_{θ,α} = J⁻¹ K J⁻¹` for the surrogate-likelihood continuous part.
pub fn cov_mlse(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector, alpha: f64) -> Result<DMatrix<f64>> {
    continuous_cov(obs, links, ups, alpha, mlse_weights, "sensitivity matrix J")
}

/// `V_{θ,α} = Λ⁻¹ Ω Λ⁻¹` for the density-power-divergence continuous part.
pub fn cov_mlme(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector, alpha: f64) -> Result<DMatrix<f64>> {
    continuous_cov(obs, links, ups, alpha, mlme_weights, "sensitivity matrix Λ")
}

/// Inverse expected information of the full likelihood.
pub fn cov_mle(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector) -> Result<CovarianceResult> {
    let vk = cov_discrete(obs, links, &ups.kappa, 0.0)?;
    let vt = cov_mlse(obs, links, ups, 0.0)?;
    Ok(CovarianceResult::from_blocks(&vk, &vt))
}

/// Inverse expected information of a plain beta regression on the
/// continuous subsample (no inflation weights).
pub fn cov_beta_regression(obs: &ObservationSet, links: &LinkSpec, theta: &[f64]) -> Result<DMatrix<f64>> {
    let p1 = obs.x().ncols();
    let (beta, gamma) = theta.split_at(p1);
    let eta = obs.x() * DVector::from_column_slice(beta);
    let zeta = obs.z() * DVector::from_column_slice(gamma);
    let mut rows = Vec::with_capacity(obs.n_dagger());
    for &i in obs.continuous_indices() {
        let p = ContinuousPoint {
            mu: links.mu.inverse(eta[i]),
            phi: links.phi.inverse(zeta[i]),
            dmu: links.mu.inverse_derivative(eta[i]),
            dphi: links.phi.inverse_derivative(zeta[i]),
        };
        rows.push((i, 1.0, mlse_weights(&p, 0.0).0));
    }
    invert_spd(&accumulate(obs, &rows), "beta-regression information")
}

/// Per-coordinate robust Wald-type test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub index: usize,
    pub estimate: f64,
    pub se: f64,
    pub null_value: f64,
    /// Signed `(υ̂_j − υ_j⁰)/se`.
    pub z: f64,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn wald(estimate: f64, se: f64, null_value: f64, index: usize) -> Result<WaldTest> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Input(format!("standard error of coordinate {index} must be positive, got {se}")));
    }
    let z = (estimate - null_value) / se;
    let statistic = z * z;
    Ok(WaldTest {
        index,
        estimate,
        se,
        null_value,
        z,
        statistic,
        p_value: chi2_1_sf(statistic),
    })
}

/// Wald test for coordinate `index` of `υ = (κ, β, γ)` of a fitted model.
pub fn wald_test(fit: &crate::estimate::FitResult, index: usize, null_value: f64) -> Result<WaldTest> {
    let est = fit.params.to_vec();
    let e = *est
        .get(index)
        .ok_or_else(|| Error::Input(format!("coordinate {index} out of range (p = {})", est.len())))?;
    wald(e, fit.covariance.se[index], null_value, index)
}

//! Residuals, robustness weights and simulated envelopes.

use crate::data::{Inflation, ObservationSet, ParamVector};
use crate::error::{Error, Result};
use crate::estimate::{fit, EstimatorKind, FitOptions, FitResult};
use crate::link::LinkSpec;
use crate::model::{conditional_moments, linear_predictors};
use crate::objectives::{continuous_rows, lmdpde_point, lsmle_point};
use crate::parallel::{map_indexed, Execution};
use crate::simulation::{replication_rng, simulate_responses};
use crate::special::{beta_cdf, norm_quantile, trigamma_unchecked};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    RandomizedQuantile,
    ByPart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub kind: ResidualKind,
    /// Quantile residuals, or discrete deviance residuals, over all `n` rows.
    pub values: Vec<f64>,
    /// SWR2 over the continuous subsample (`None` when leverage reaches 1).
    pub continuous: Vec<Option<f64>>,
    /// Row indices of `continuous`.
    pub continuous_index: Vec<usize>,
    pub rng_seed: Option<u64>,
    pub warnings: Vec<String>,
}

fn clamp_unit(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `BI_c` cdf at `y ∈ (0,1)`.
fn mixture_cdf(y: f64, c: Inflation, theta: f64, mu: f64, phi: f64) -> f64 {
    let f = beta_cdf(y, mu * phi, (1.0 - mu) * phi);
    match c {
        Inflation::Zero => theta + (1.0 - theta) * f,
        Inflation::One => (1.0 - theta) * f,
    }
}

fn quantile_residuals_with<R: Rng>(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector, rng: &mut R) -> Result<Vec<f64>> {
    let p = linear_predictors(obs, links, ups)?;
    let c = obs.c();
    (0..obs.n())
        .map(|i| {
            let (th, mu, phi) = (p.theta[i], p.mu[i], p.phi[i]);
            let u = if obs.y()[i] == c.value() {
                let v: f64 = rng.random();
                match c {
                    Inflation::Zero => v * th,
                    Inflation::One => 1.0 - th + v * th,
                }
            } else {
                mixture_cdf(obs.y()[i], c, th, mu, phi)
            };
            let r = norm_quantile(clamp_unit(u));
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::Domain(format!("cdf evaluation failed at row {}", i + 1)))
            }
        })
        .collect()
}

/// Randomized quantile residuals, reproducible from `seed`.
pub fn quantile_residuals(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector, seed: u64) -> Result<ResidualSet> {
    let values = quantile_residuals_with(obs, links, ups, &mut replication_rng(seed, 0))?;
    Ok(ResidualSet {
        kind: ResidualKind::RandomizedQuantile,
        values,
        continuous: Vec::new(),
        continuous_index: Vec::new(),
        rng_seed: Some(seed),
        warnings: Vec::new(),
    })
}

/// Signed Bernoulli deviance residual with `0·ln 0 = 0`.
pub fn deviance_residual(indicator: f64, theta: f64) -> f64 {
    let term = |w: f64, p: f64| if w == 0.0 { 0.0 } else { w * p.ln() };
    let d = -2.0 * (term(indicator, theta) + term(1.0 - indicator, 1.0 - theta));
    (indicator - theta).signum() * d.max(0.0).sqrt()
}

/// Deviance residuals for the discrete part and SWR2 for the continuous part.
///
/// Leverages come from the maximum-likelihood beta-regression hat matrix on
/// the continuous subsample, whatever estimator produced `ups`.
pub fn by_part_residuals(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector) -> Result<ResidualSet> {
    let p = linear_predictors(obs, links, ups)?;
    let ind = &obs.partition().indicator;
    let values = (0..obs.n()).map(|i| deviance_residual(ind[i], p.theta[i])).collect();

    let rows = continuous_rows(obs, links, ups.theta().as_slice());
    let (xc, _) = obs.continuous_design();
    let nd = rows.len();
    let mut v = Vec::with_capacity(nd);
    let mut w = Vec::with_capacity(nd);
    for r in &rows {
        let vi = trigamma_unchecked(r.mu * r.phi) + trigamma_unchecked((1.0 - r.mu) * r.phi);
        v.push(vi);
        w.push(r.phi * vi * r.dmu * r.dmu);
    }
    let sw = DMatrix::from_fn(nd, xc.ncols(), |i, j| xc[(i, j)] * w[i].sqrt());
    let info = sw.transpose() * &sw;
    let inv = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("mean-model information for leverages is singular".into()))?;
    let mut warnings = Vec::new();
    let mut continuous = Vec::with_capacity(nd);
    for (k, r) in rows.iter().enumerate() {
        let row = sw.row(k);
        let h = (row * &inv * row.transpose())[(0, 0)];
        let (ms, _) = conditional_moments(r.mu, r.phi);
        if h >= 1.0 - 1e-10 {
            warnings.push(format!("row {} has leverage {h:.6} of 1; SWR2 missing", r.index + 1));
            continuous.push(None);
        } else {
            continuous.push(Some((r.y_star - ms) / (v[k] * (1.0 - h)).sqrt()));
        }
    }
    Ok(ResidualSet {
        kind: ResidualKind::ByPart,
        values,
        continuous,
        continuous_index: obs.continuous_indices().to_vec(),
        rng_seed: None,
        warnings,
    })
}

/// `h*^α` (M-LSE) or `h^α` (M-LME) on the continuous subsample, divided by
/// the largest value. All ones for maximum likelihood or `α = 0`.
pub fn robust_weights(
    obs: &ObservationSet,
    links: &LinkSpec,
    ups: &ParamVector,
    estimator: EstimatorKind,
    alpha_cont: f64,
) -> Result<Vec<f64>> {
    if alpha_cont < 0.0 {
        return Err(Error::Input(format!("tuning constant must be non-negative, got {alpha_cont}")));
    }
    let rows = continuous_rows(obs, links, ups.theta().as_slice());
    if estimator == EstimatorKind::Mle || alpha_cont == 0.0 {
        return Ok(vec![1.0; rows.len()]);
    }
    let logs: Vec<f64> = rows
        .iter()
        .map(|r| match estimator {
            EstimatorKind::Mlse => lsmle_point(r.y_star, r.y_dagger, r.mu, r.phi, alpha_cont).log_h,
            _ => lmdpde_point(r.y_star, r.y_dagger, r.mu, r.phi, alpha_cont).log_h,
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(logs.iter().map(|l| (alpha_cont * (l - top)).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub n_sim: usize,
    pub band: f64,
    pub seed: u64,
    /// Refit the estimator on every simulated sample.
    pub refit: bool,
    pub execution: crate::parallel::Execution,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            n_sim: 100,
            band: 0.95,
            seed: 0,
            refit: false,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub theoretical: f64,
    pub observed: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl EnvelopeRow {
    pub fn inside(&self) -> bool {
        self.lower <= self.observed && self.observed <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub rows: Vec<EnvelopeRow>,
    pub band: f64,
    pub n_sim: usize,
    pub seed: u64,
    pub refit: bool,
    /// Simulations skipped because the refit failed.
    pub skipped: usize,
}

impl Envelope {
    pub fn coverage(&self) -> f64 {
        self.rows.iter().filter(|r| r.inside()).count() as f64 / self.rows.len() as f64
    }
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(v: &[f64], q: f64) -> f64 {
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Normal plotting positions `Φ⁻¹((i − 3/8)/(n + 1/4))`.
pub fn normal_scores(n: usize) -> Vec<f64> {
    (1..=n).map(|i| norm_quantile((i as f64 - 0.375) / (n as f64 + 0.25))).collect()
}

/// Simulated envelope for the quantile residuals of `fit`.
pub fn envelope(obs: &ObservationSet, fit_result: &FitResult, cfg: &EnvelopeConfig) -> Result<Envelope> {
    if cfg.n_sim < 2 {
        return Err(Error::Input("envelope needs at least 2 simulations".into()));
    }
    if !(cfg.band > 0.0 && cfg.band < 1.0) {
        return Err(Error::Input(format!("band must lie in (0,1), got {}", cfg.band)));
    }
    let links = fit_result.links;
    let ups = &fit_result.params;
    let mut observed = quantile_residuals(obs, &links, ups, cfg.seed)?.values;
    observed.sort_by(f64::total_cmp);
    let opts = FitOptions {
        links,
        ..FitOptions::fixed(fit_result.alpha.alpha_disc, fit_result.alpha.alpha_cont)
    };
    let sims: Vec<Option<Vec<f64>>> = map_indexed(cfg.n_sim, cfg.execution, |j| {
        let mut rng = replication_rng(cfg.seed, j as u64 + 1);
        let sim = simulate_responses(obs, &links, ups, &mut rng).ok()?;
        let at = if cfg.refit {
            let f = fit(&sim, fit_result.estimator, &opts).ok()?;
            if !f.converged() {
                return None;
            }
            f.params
        } else {
            ups.clone()
        };
        let mut r = quantile_residuals_with(&sim, &links, &at, &mut rng).ok()?;
        r.sort_by(f64::total_cmp);
        Some(r)
    });
    let ok: Vec<Vec<f64>> = sims.iter().flatten().cloned().collect();
    if ok.len() < 2 {
        return Err(Error::NotConverged("fewer than 2 envelope simulations succeeded".into()));
    }
    let lo_q = 0.5 * (1.0 - cfg.band);
    let theo = normal_scores(obs.n());
    let rows = (0..obs.n())
        .map(|i| {
            let mut col: Vec<f64> = ok.iter().map(|r| r[i]).collect();
            col.sort_by(f64::total_cmp);
            EnvelopeRow {
                theoretical: theo[i],
                observed: observed[i],
                lower: sorted_quantile(&col, lo_q),
                median: sorted_quantile(&col, 0.5),
                upper: sorted_quantile(&col, 1.0 - lo_q),
            }
        })
        .collect();
    Ok(Envelope {
        rows,
        band: cfg.band,
        n_sim: cfg.n_sim,
        seed: cfg.seed,
        refit: cfg.refit,
        skipped: sims.len() - ok.len(),
    })
}

/// Kolmogorov–Smirnov distance of a sample to the standard normal.
pub fn ks_normal(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = crate::special::norm_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

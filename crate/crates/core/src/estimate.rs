//! Model fitting for the three estimators.

use crate::data::{DesignNames, ObservationSet, ParamVector};
use crate::diagnostics::robust_weights;
use crate::error::{Error, Result};
use crate::inference::{cov_beta_regression, cov_discrete, cov_mle, cov_mlme, cov_mlse, CovarianceResult};
use crate::link::LinkSpec;
use crate::objectives::{
    check_alpha_cont, check_alpha_disc, continuous_value_grad, discrete_value_grad, ContinuousKind, TuningConstants,
};
use crate::optimizer::{default_start, maximize, ConvergenceReport, OptimizerConfig};
use crate::tuning::{default_grids, select_alpha, standardized_estimates, Part, TuningGrid, TuningTrace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Maximum likelihood.
    Mle,
    /// Discrete MDPDE with continuous surrogate-likelihood (LSMLE) part.
    Mlse,
    /// Discrete MDPDE with continuous LMDPDE part.
    Mlme,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Mle, EstimatorKind::Mlse, EstimatorKind::Mlme];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Mlse => "mlse",
            EstimatorKind::Mlme => "mlme",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "MLE",
            EstimatorKind::Mlse => "M-LSE",
            EstimatorKind::Mlme => "M-LME",
        }
    }

    pub(crate) fn continuous(self) -> ContinuousKind {
        match self {
            EstimatorKind::Mle | EstimatorKind::Mlse => ContinuousKind::Lsmle,
            EstimatorKind::Mlme => ContinuousKind::Lmdpde,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "mle" => Ok(EstimatorKind::Mle),
            "mlse" => Ok(EstimatorKind::Mlse),
            "mlme" => Ok(EstimatorKind::Mlme),
            other => Err(Error::Input(format!("unknown estimator `{other}` (expected mle, mlse or mlme)"))),
        }
    }
}

/// Tuning constant for one part: fixed, or chosen from a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaChoice {
    Fixed(f64),
    Auto(TuningGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub links: LinkSpec,
    pub alpha_disc: AlphaChoice,
    pub alpha_cont: AlphaChoice,
    pub optimizer: OptimizerConfig,
    /// Overrides the default starting values.
    pub start: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        let (c, d) = default_grids();
        Self {
            links: LinkSpec::default(),
            alpha_disc: AlphaChoice::Auto(d),
            alpha_cont: AlphaChoice::Auto(c),
            optimizer: OptimizerConfig::default(),
            start: None,
        }
    }
}

impl FitOptions {
    pub fn fixed(alpha_disc: f64, alpha_cont: f64) -> Self {
        Self {
            alpha_disc: AlphaChoice::Fixed(alpha_disc),
            alpha_cont: AlphaChoice::Fixed(alpha_cont),
            ..Self::default()
        }
    }
}

/// Fitted discrete part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFit {
    pub kappa: Vec<f64>,
    pub alpha: f64,
    pub cov: DMatrix<f64>,
    pub report: ConvergenceReport,
    pub trace: Option<TuningTrace>,
}

/// Fitted continuous part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFit {
    pub kind: ContinuousKind,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub report: ConvergenceReport,
    pub trace: Option<TuningTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: EstimatorKind,
    pub links: LinkSpec,
    pub names: DesignNames,
    pub params: ParamVector,
    pub covariance: CovarianceResult,
    pub alpha: TuningConstants,
    pub discrete_report: ConvergenceReport,
    pub continuous_report: ConvergenceReport,
    pub discrete_trace: Option<TuningTrace>,
    pub continuous_trace: Option<TuningTrace>,
    /// Robustness weights on the continuous subsample, max-normalized.
    pub weights: Vec<f64>,
    pub n: usize,
    pub n_dagger: usize,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.discrete_report.converged && self.continuous_report.converged
    }

    /// Parameter labels in `(κ, β, γ)` order, prefixed by submodel.
    pub fn labels(&self) -> Vec<(String, String)> {
        let tag = |p: &str, v: &[String]| v.iter().map(|n| (p.to_string(), n.clone())).collect::<Vec<_>>();
        let mut out = tag("discrete", &self.names.discrete);
        out.extend(tag("mean", &self.names.mean));
        out.extend(tag("precision", &self.names.precision));
        out
    }
}

fn resolve_fixed(choice: &AlphaChoice, kind: EstimatorKind) -> Option<f64> {
    match (kind, choice) {
        (EstimatorKind::Mle, _) => Some(0.0),
        (_, AlphaChoice::Fixed(a)) => Some(*a),
        (_, AlphaChoice::Auto(_)) => None,
    }
}

fn solve_discrete(obs: &ObservationSet, links: &LinkSpec, start: &[f64], alpha: f64, cfg: &OptimizerConfig) -> Result<(Vec<f64>, ConvergenceReport)> {
    maximize(|k| discrete_value_grad(obs, links, k, alpha), start, cfg)
}

/// Fits from each start and keeps the largest objective among usable solutions.
fn solve_discrete_from(
    obs: &ObservationSet,
    links: &LinkSpec,
    starts: &[&[f64]],
    alpha: f64,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let mut best: Option<(f64, Vec<f64>, ConvergenceReport)> = None;
    let mut last_err = None;
    for (j, s) in starts.iter().enumerate() {
        if starts[..j].contains(s) {
            continue;
        }
        match solve_discrete(obs, links, s, alpha, cfg) {
            Ok((k, rep)) => {
                let value = if usable(&rep, &k) { discrete_value_grad(obs, links, &k, alpha).0 } else { f64::NEG_INFINITY };
                if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
                    best = Some((value, k, rep));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, k, rep)), _) => Ok((k, rep)),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Input("no starting values".into())),
    }
}

fn solve_continuous(
    obs: &ObservationSet,
    links: &LinkSpec,
    kind: ContinuousKind,
    start: &[f64],
    alpha: f64,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    maximize(|t| continuous_value_grad(kind, obs, links, t, alpha), start, cfg)
}

fn usable(report: &ConvergenceReport, est: &[f64]) -> bool {
    report.converged && est.iter().all(|v| v.is_finite())
}

/// Fits `κ` at a fixed tuning constant or by grid search.
pub fn fit_discrete(
    obs: &ObservationSet,
    links: &LinkSpec,
    choice: &AlphaChoice,
    start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<DiscreteFit> {
    let (alpha, trace, cached) = match choice {
        AlphaChoice::Fixed(a) => {
            check_alpha_disc(*a)?;
            (*a, None, None)
        }
        AlphaChoice::Auto(grid) => {
            let mut warm = start.to_vec();
            let mut fits: Vec<(f64, Vec<f64>, ConvergenceReport)> = Vec::new();
            let trace = select_alpha(
                Part::Discrete,
                |a| {
                    let (k, rep) = solve_discrete_from(obs, links, &[&warm, start], a, cfg).ok()?;
                    if !usable(&rep, &k) {
                        return None;
                    }
                    warm = k.clone();
                    fits.push((a, k.clone(), rep));
                    let v = cov_discrete(obs, links, &k, a).ok()?;
                    let se: Vec<f64> = v.diagonal().iter().map(|d| d.sqrt()).collect();
                    standardized_estimates(&k, &se, obs.n()).ok()
                },
                grid,
            )?;
            let alpha = trace.chosen_alpha;
            let cached = fits.into_iter().rev().find(|(a, _, _)| *a == alpha).map(|(_, k, rep)| (k, rep));
            (alpha, Some(trace), cached)
        }
    };
    let (kappa, report) = match cached {
        Some(fit) => fit,
        None => solve_discrete(obs, links, start, alpha, cfg)?,
    };
    let cov = if usable(&report, &kappa) {
        cov_discrete(obs, links, &kappa, alpha)?
    } else {
        DMatrix::from_element(kappa.len(), kappa.len(), f64::NAN)
    };
    Ok(DiscreteFit { kappa, alpha, cov, report, trace })
}

/// Fits `θ = (β, γ)` at a fixed tuning constant or by grid search.
pub fn fit_continuous(
    obs: &ObservationSet,
    links: &LinkSpec,
    kind: ContinuousKind,
    choice: &AlphaChoice,
    start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<ContinuousFit> {
    if obs.n_dagger() <= obs.x().ncols() + obs.z().ncols() {
        return Err(Error::Input(format!(
            "only {} observations in (0,1) for {} mean/precision parameters",
            obs.n_dagger(),
            obs.x().ncols() + obs.z().ncols()
        )));
    }
    let (alpha, trace) = match choice {
        AlphaChoice::Fixed(a) => {
            check_alpha_cont(*a)?;
            (*a, None)
        }
        AlphaChoice::Auto(grid) => {
            let (ml, rep) = solve_continuous(obs, links, kind, start, 0.0, cfg)?;
            let se: Vec<f64> = if usable(&rep, &ml) {
                cov_beta_regression(obs, links, &ml)?.diagonal().iter().map(|d| d.sqrt()).collect()
            } else {
                return Err(Error::NotConverged(format!("continuous part at α = 0: {}", rep.message)));
            };
            let mut warm = ml.clone();
            let trace = select_alpha(
                Part::Continuous,
                |a| {
                    let (t, rep) = if a == 0.0 {
                        (ml.clone(), rep.clone())
                    } else {
                        solve_continuous(obs, links, kind, &warm, a, cfg).ok()?
                    };
                    if !usable(&rep, &t) {
                        return None;
                    }
                    warm = t.clone();
                    standardized_estimates(&t, &se, obs.n_dagger()).ok()
                },
                grid,
            )?;
            (trace.chosen_alpha, Some(trace))
        }
    };
    let (theta, report) = solve_continuous(obs, links, kind, start, alpha, cfg)?;
    Ok(ContinuousFit { kind, theta, alpha, report, trace })
}

/// Combines fitted parts into a [`FitResult`] with the matching covariance.
pub fn assemble(
    obs: &ObservationSet,
    links: &LinkSpec,
    estimator: EstimatorKind,
    disc: DiscreteFit,
    cont: ContinuousFit,
) -> Result<FitResult> {
    let p1 = obs.x().ncols();
    let params = ParamVector::new(disc.kappa.clone(), cont.theta[..p1].to_vec(), cont.theta[p1..].to_vec());
    let converged = usable(&disc.report, &disc.kappa) && usable(&cont.report, &cont.theta);
    let covariance = if !converged {
        let p = params.len();
        CovarianceResult::from_blocks(
            &DMatrix::from_element(disc.kappa.len(), disc.kappa.len(), f64::NAN),
            &DMatrix::from_element(p - disc.kappa.len(), p - disc.kappa.len(), f64::NAN),
        )
    } else {
        match estimator {
            EstimatorKind::Mle => cov_mle(obs, links, &params)?,
            EstimatorKind::Mlse => CovarianceResult::from_blocks(&disc.cov, &cov_mlse(obs, links, &params, cont.alpha)?),
            EstimatorKind::Mlme => CovarianceResult::from_blocks(&disc.cov, &cov_mlme(obs, links, &params, cont.alpha)?),
        }
    };
    let weights = robust_weights(obs, links, &params, estimator, cont.alpha)?;
    Ok(FitResult {
        estimator,
        links: *links,
        names: obs.names().clone(),
        params,
        covariance,
        alpha: TuningConstants {
            alpha_disc: disc.alpha,
            alpha_cont: cont.alpha,
        },
        discrete_report: disc.report,
        continuous_report: cont.report,
        discrete_trace: disc.trace,
        continuous_trace: cont.trace,
        weights,
        n: obs.n(),
        n_dagger: obs.n_dagger(),
    })
}

/// Fits one estimator. Non-convergence is reported in the result, not as an error.
pub fn fit(obs: &ObservationSet, estimator: EstimatorKind, opts: &FitOptions) -> Result<FitResult> {
    let links = opts.links;
    let start = match &opts.start {
        Some(s) => {
            s.check_dims(obs)?;
            obs.check_rank()?;
            s.clone()
        }
        None => default_start(obs, &links)?,
    };
    let dchoice = resolve_fixed(&opts.alpha_disc, estimator).map(AlphaChoice::Fixed).unwrap_or(opts.alpha_disc);
    let cchoice = resolve_fixed(&opts.alpha_cont, estimator).map(AlphaChoice::Fixed).unwrap_or(opts.alpha_cont);
    let disc = fit_discrete(obs, &links, &dchoice, &start.kappa, &opts.optimizer)?;
    let cont = fit_continuous(obs, &links, estimator.continuous(), &cchoice, start.theta().as_slice(), &opts.optimizer)?;
    assemble(obs, &links, estimator, disc, cont)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood;
    use crate::objectives::mle_score;
    use crate::objectives::test_support::sample;

    #[test]
    fn mle_is_stationary() {
        let obs = sample(150, 31);
        let fit = fit(&obs, EstimatorKind::Mle, &FitOptions::default()).unwrap();
        assert!(fit.converged());
        let s = mle_score(&obs, &fit.links, &fit.params).unwrap();
        assert!(s.u_kappa.amax() < 1e-6 && s.u_theta.amax() < 1e-6);
        assert_eq!(fit.alpha, TuningConstants::default());
        assert!(fit.weights.iter().all(|&w| w == 1.0));
        let ll = log_likelihood(&obs, &fit.links, &fit.params).unwrap();
        let mut nudged = fit.params.clone();
        nudged.beta[1] += 1e-3;
        assert!(log_likelihood(&obs, &fit.links, &nudged).unwrap().ell < ll.ell);
    }

    #[test]
    fn zero_tuning_reproduces_mle() {
        let obs = sample(120, 5);
        let mle = fit(&obs, EstimatorKind::Mle, &FitOptions::default()).unwrap();
        for kind in [EstimatorKind::Mlse, EstimatorKind::Mlme] {
            let r = fit(&obs, kind, &FitOptions::fixed(0.0, 0.0)).unwrap();
            for (a, b) in r.params.to_vec().iter().zip(mle.params.to_vec()) {
                assert!((a - b).abs() < 1e-6);
            }
            for (a, b) in r.covariance.se.iter().zip(mle.covariance.se.iter()) {
                assert!((a - b).abs() < 1e-8 * b);
            }
        }
    }

    #[test]
    fn robust_fit_with_fixed_alpha_converges() {
        let obs = sample(150, 8);
        for kind in [EstimatorKind::Mlse, EstimatorKind::Mlme] {
            let r = fit(&obs, kind, &FitOptions::fixed(0.3, 0.1)).unwrap();
            assert!(r.converged(), "{kind}");
            assert!(r.covariance.se.iter().all(|s| s.is_finite() && *s > 0.0));
            assert!(r.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(r.weights.contains(&1.0));
        }
    }

    #[test]
    fn parse_estimator_names() {
        assert_eq!("M-LSE".parse::<EstimatorKind>().unwrap(), EstimatorKind::Mlse);
        assert_eq!("mlme".parse::<EstimatorKind>().unwrap(), EstimatorKind::Mlme);
        assert!("huber".parse::<EstimatorKind>().is_err());
    }
}

//! Data generation, contamination and the Monte Carlo harness.

use crate::data::{Inflation, ObservationSet, ParamVector};
use crate::error::{Error, Result};
use crate::estimate::{assemble, fit_continuous, fit_discrete, AlphaChoice, EstimatorKind};
use crate::inference::wald;
use crate::link::LinkSpec;
use crate::model::linear_predictors;
use crate::optimizer::{default_start, OptimizerConfig};
use crate::parallel::{map_indexed, Execution};
use crate::tuning::default_grids;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Tuning constant setting in a scenario file: a number or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Fixed(f64),
    Keyword(String),
}

impl Default for AlphaSetting {
    fn default() -> Self {
        AlphaSetting::Keyword("auto".into())
    }
}

impl AlphaSetting {
    fn resolve(&self, discrete: bool) -> Result<AlphaChoice> {
        let (c, d) = default_grids();
        match self {
            AlphaSetting::Fixed(a) => Ok(AlphaChoice::Fixed(*a)),
            AlphaSetting::Keyword(k) if k == "auto" => Ok(AlphaChoice::Auto(if discrete { d } else { c })),
            AlphaSetting::Keyword(k) => Err(Error::Input(format!("alpha must be a number or \"auto\", got \"{k}\""))),
        }
    }
}

fn default_truth() -> ParamVector {
    ParamVector::new(vec![0.0, 2.0, 2.0], vec![-1.8, -2.0], vec![4.5])
}
fn default_rate() -> f64 {
    0.05
}
fn default_level() -> f64 {
    0.05
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_offset() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_truth")]
    pub truth: ParamVector,
    #[serde(default)]
    pub links: LinkSpec,
    #[serde(default = "default_inflation")]
    pub inflation: Inflation,
    #[serde(default)]
    pub contaminate_continuous: bool,
    #[serde(default)]
    pub contaminate_discrete: bool,
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Distance multiplier: contaminated discrete rows sit at `offset·√p0`.
    #[serde(default = "default_offset")]
    pub offset: f64,
    /// Keep one covariate draw for every replication.
    #[serde(default)]
    pub fixed_covariates: bool,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub alpha_disc: AlphaSetting,
    #[serde(default)]
    pub alpha_cont: AlphaSetting,
    /// Nominal level of the Wald tests at the true values.
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_inflation() -> Inflation {
    Inflation::Zero
}

impl ScenarioSpec {
    /// Scenario 0 is clean; 1 contaminates the continuous part, 2 the
    /// discrete part, 3 both.
    pub fn scenario(k: u8, n: usize, reps: usize, seed: u64) -> Result<Self> {
        if k > 3 {
            return Err(Error::Input(format!("scenario must be 0, 1, 2 or 3, got {k}")));
        }
        Ok(Self {
            name: if k == 0 { "clean".into() } else { format!("scenario{k}") },
            n,
            reps,
            seed,
            truth: default_truth(),
            links: LinkSpec::default(),
            inflation: Inflation::Zero,
            contaminate_continuous: k == 1 || k == 3,
            contaminate_discrete: k == 2 || k == 3,
            rate: 0.05,
            offset: default_offset(),
            fixed_covariates: false,
            estimators: default_estimators(),
            alpha_disc: AlphaSetting::default(),
            alpha_cont: AlphaSetting::default(),
            level: 0.05,
        })
    }

    pub fn with_fixed_alpha(mut self, alpha_disc: f64, alpha_cont: f64) -> Self {
        self.alpha_disc = AlphaSetting::Fixed(alpha_disc);
        self.alpha_cont = AlphaSetting::Fixed(alpha_cont);
        self
    }

    pub fn with_estimators(mut self, estimators: &[EstimatorKind]) -> Self {
        self.estimators = estimators.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Input(format!("scenario field `{field}`: {msg}")));
        let (p0, p1, p2) = (self.truth.kappa.len(), self.truth.beta.len(), self.truth.gamma.len());
        if p0 == 0 || p1 == 0 || p2 == 0 {
            return fail("truth", "every submodel needs at least an intercept".into());
        }
        if self.n <= p0 + p1 + p2 {
            return fail("n", format!("{} is not larger than the parameter count {}", self.n, p0 + p1 + p2));
        }
        if self.reps == 0 {
            return fail("reps", "must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.rate) {
            return fail("rate", format!("must lie in [0, 0.5), got {}", self.rate));
        }
        if self.contaminate_discrete && p0 < 2 {
            return fail("contaminate_discrete", "needs at least one discrete slope".into());
        }
        if self.contaminate_discrete && self.truth.kappa[1..].iter().all(|&v| v == 0.0) {
            return fail("truth.kappa", "discrete contamination needs a nonzero slope".into());
        }
        if self.estimators.is_empty() {
            return fail("estimators", "list is empty".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail("level", format!("must lie in (0,1), got {}", self.level));
        }
        self.alpha_disc.resolve(true).map_err(|e| Error::Input(format!("scenario field `alpha_disc`: {e}")))?;
        self.alpha_cont.resolve(false).map_err(|e| Error::Input(format!("scenario field `alpha_cont`: {e}")))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Input(format!("invalid scenario file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// RNG substream for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn beta_draw<R: Rng + ?Sized>(rng: &mut R, mu: f64, phi: f64) -> f64 {
    let v: f64 = Beta::new(mu * phi, (1.0 - mu) * phi)
        .map(|d| d.sample(rng))
        .unwrap_or(mu);
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// One draw from `BI_c(ϑ, μ, φ)`.
pub fn draw_response<R: Rng + ?Sized>(rng: &mut R, c: Inflation, theta: f64, mu: f64, phi: f64) -> f64 {
    if rng.random::<f64>() < theta {
        c.value()
    } else {
        beta_draw(rng, mu, phi)
    }
}

/// New responses for the covariates of `obs`, drawn at `ups`.
pub fn simulate_responses<R: Rng + ?Sized>(
    obs: &ObservationSet,
    links: &LinkSpec,
    ups: &ParamVector,
    rng: &mut R,
) -> Result<ObservationSet> {
    let p = linear_predictors(obs, links, ups)?;
    let y = (0..obs.n())
        .map(|i| draw_response(rng, obs.c(), p.theta[i], p.mu[i], p.phi[i]))
        .collect();
    obs.with_responses(y)
}

fn draw_covariates<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = spec.n;
    let mut s = DMatrix::from_element(n, spec.truth.kappa.len(), 1.0);
    let mut x = DMatrix::from_element(n, spec.truth.beta.len(), 1.0);
    let mut z = DMatrix::from_element(n, spec.truth.gamma.len(), 1.0);
    for i in 0..n {
        for j in 1..s.ncols() {
            s[(i, j)] = rng.sample(StandardNormal);
        }
        for j in 1..x.ncols() {
            x[(i, j)] = rng.random::<f64>();
        }
        for j in 1..z.ncols() {
            z[(i, j)] = rng.random::<f64>();
        }
    }
    (s, x, z)
}

/// Clean sample from the scenario's data-generating process.
pub fn generate_clean<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<ObservationSet> {
    let (s, x, z) = draw_covariates(spec, rng);
    generate_on(spec, s, x, z, rng)
}

fn generate_on<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    s: DMatrix<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    rng: &mut R,
) -> Result<ObservationSet> {
    // Responses are placeholders until the predictors are known.
    let filler = vec![0.5; spec.n];
    let obs = ObservationSet::new(spec.inflation, filler, s, x, z)?;
    simulate_responses(&obs, &spec.links, &spec.truth, rng)
}

fn contamination_count(rate: f64, m: usize) -> usize {
    ((rate * m as f64 - 1e-9).ceil().max(0.0) as usize).min(m)
}

/// Replaces the continuous responses with the smallest true means by draws
/// with mean `(1+μ_i)/2`. Returns the new sample and the touched rows.
pub fn contaminate_continuous<R: Rng + ?Sized>(
    obs: &ObservationSet,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(ObservationSet, Vec<usize>)> {
    let m = contamination_count(spec.rate, obs.n_dagger());
    if m == 0 {
        return Ok((obs.clone(), Vec::new()));
    }
    let p = linear_predictors(obs, &spec.links, &spec.truth)?;
    let mut idx = obs.continuous_indices().to_vec();
    idx.sort_by(|&a, &b| p.mu[a].total_cmp(&p.mu[b]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    let mut y = obs.y().to_vec();
    for &i in &idx {
        y[i] = beta_draw(rng, 0.5 * (1.0 + p.mu[i]), p.phi[i]);
    }
    Ok((obs.with_responses(y)?, idx))
}

/// Moves the rows with the largest true `ϑ_i` to a hyperplane parallel to
/// `{s : κᵀ(1, s) = 0}` at distance `offset·√p0` on the high-`ϑ` side and
/// gives them continuous responses from the clean beta law.
pub fn contaminate_discrete<R: Rng + ?Sized>(
    obs: &ObservationSet,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(ObservationSet, Vec<usize>)> {
    let m = contamination_count(spec.rate, obs.n());
    if m == 0 {
        return Ok((obs.clone(), Vec::new()));
    }
    let slope = &spec.truth.kappa[1..];
    let norm = slope.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Input("discrete contamination needs a nonzero slope vector".into()));
    }
    let unit: Vec<f64> = slope.iter().map(|v| v / norm).collect();
    let dist = spec.offset * (spec.truth.kappa.len() as f64).sqrt();
    let p = linear_predictors(obs, &spec.links, &spec.truth)?;
    let mut idx: Vec<usize> = (0..obs.n()).collect();
    idx.sort_by(|&a, &b| p.theta[b].total_cmp(&p.theta[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    let mut y = obs.y().to_vec();
    let mut s = obs.s().clone();
    for &i in &idx {
        y[i] = beta_draw(rng, p.mu[i], p.phi[i]);
        let proj: f64 = (0..unit.len()).map(|j| s[(i, j + 1)] * unit[j]).sum();
        for (j, u) in unit.iter().enumerate() {
            s[(i, j + 1)] += (dist - proj) * u;
        }
    }
    Ok((obs.with_discrete_design(y, s)?, idx))
}

/// Clean sample plus the scenario's contamination for replication `rep`.
pub fn scenario_sample(spec: &ScenarioSpec, rep: u64) -> Result<ObservationSet> {
    let mut rng = replication_rng(spec.seed, rep);
    let mut obs = if spec.fixed_covariates {
        let mut crng = replication_rng(spec.seed, u64::MAX);
        let (s, x, z) = draw_covariates(spec, &mut crng);
        generate_on(spec, s, x, z, &mut rng)?
    } else {
        generate_clean(spec, &mut rng)?
    };
    if spec.contaminate_continuous {
        obs = contaminate_continuous(&obs, spec, &mut rng)?.0;
    }
    if spec.contaminate_discrete {
        obs = contaminate_discrete(&obs, spec, &mut rng)?.0;
    }
    Ok(obs)
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFit {
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub alpha_disc: f64,
    pub alpha_cont: f64,
    pub converged: bool,
    /// Set when fitting raised an error instead of returning a result.
    pub error: Option<String>,
}

impl ReplicationFit {
    fn failed(msg: String) -> Self {
        Self {
            estimates: Vec::new(),
            se: Vec::new(),
            alpha_disc: f64::NAN,
            alpha_cont: f64::NAN,
            converged: false,
            error: Some(msg),
        }
    }

    pub fn usable(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

/// Fits every requested estimator on one sample. The discrete part is shared
/// between the robust estimators.
pub fn fit_replication(
    obs: &ObservationSet,
    spec: &ScenarioSpec,
    optimizer: &OptimizerConfig,
) -> Vec<ReplicationFit> {
    let links = spec.links;
    let run = || -> Result<Vec<ReplicationFit>> {
        let start = default_start(obs, &links)?;
        let dchoice = spec.alpha_disc.resolve(true)?;
        let cchoice = spec.alpha_cont.resolve(false)?;
        let mut disc_ml = None;
        let mut disc_rob = None;
        let mut out = Vec::new();
        for &kind in &spec.estimators {
            let disc = if kind == EstimatorKind::Mle {
                disc_ml.get_or_insert_with(|| fit_discrete(obs, &links, &AlphaChoice::Fixed(0.0), &start.kappa, optimizer))
            } else {
                disc_rob.get_or_insert_with(|| fit_discrete(obs, &links, &dchoice, &start.kappa, optimizer))
            };
            let cc = if kind == EstimatorKind::Mle { AlphaChoice::Fixed(0.0) } else { cchoice };
            let res = match disc {
                Ok(d) => fit_continuous(obs, &links, kind.continuous(), &cc, start.theta().as_slice(), optimizer)
                    .and_then(|c| assemble(obs, &links, kind, d.clone(), c)),
                Err(e) => Err(Error::NotConverged(format!("discrete part: {e}"))),
            };
            out.push(match res {
                Ok(f) => ReplicationFit {
                    converged: f.converged(),
                    estimates: f.params.to_vec(),
                    se: f.covariance.se.iter().copied().collect(),
                    alpha_disc: f.alpha.alpha_disc,
                    alpha_cont: f.alpha.alpha_cont,
                    error: None,
                },
                Err(e) => ReplicationFit::failed(e.to_string()),
            });
        }
        Ok(out)
    };
    run().unwrap_or_else(|e| spec.estimators.iter().map(|_| ReplicationFit::failed(e.to_string())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub used: usize,
    pub failed: usize,
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Monte Carlo standard deviation of each estimate.
    pub sd: Vec<Option<f64>>,
    /// Average reported standard error.
    pub mean_se: Vec<f64>,
    /// Rejection rate of the Wald test at the true value.
    pub rejection: Vec<f64>,
    pub tmse: f64,
    pub alpha_disc_mean: f64,
    pub alpha_disc_sd: Option<f64>,
    pub alpha_cont_mean: f64,
    pub alpha_cont_sd: Option<f64>,
    /// Share of replications whose selected constant is exactly 0.
    pub alpha_disc_zero: f64,
    pub alpha_cont_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmseRatio {
    pub numerator: EstimatorKind,
    pub denominator: EstimatorKind,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub spec: ScenarioSpec,
    pub labels: Vec<String>,
    pub truth: Vec<f64>,
    pub estimators: Vec<EstimatorSummary>,
    pub tmse_ratios: Vec<TmseRatio>,
    /// False when some estimator failed on more than 1% of replications.
    pub reliable: bool,
    /// `replications[r][e]` is estimator `e` on replication `r`.
    pub replications: Vec<Vec<ReplicationFit>>,
}

impl MonteCarloSummary {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }

    pub fn ratio(&self, num: EstimatorKind, den: EstimatorKind) -> Option<f64> {
        self.tmse_ratios
            .iter()
            .find(|r| r.numerator == num && r.denominator == den)
            .map(|r| r.ratio)
    }
}

fn mean_sd(v: &[f64]) -> (f64, Option<f64>) {
    if v.is_empty() {
        return (f64::NAN, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt());
    (m, sd)
}

fn param_labels(truth: &ParamVector) -> Vec<String> {
    let mut l: Vec<String> = (1..=truth.kappa.len()).map(|j| format!("kappa{j}")).collect();
    l.extend((1..=truth.beta.len()).map(|j| format!("beta{j}")));
    l.extend((1..=truth.gamma.len()).map(|j| format!("gamma{j}")));
    l
}

fn summarize(kind: EstimatorKind, fits: &[&ReplicationFit], truth: &[f64], level: f64) -> EstimatorSummary {
    let ok: Vec<&ReplicationFit> = fits.iter().copied().filter(|f| f.usable()).collect();
    let p = truth.len();
    let mut bias = vec![f64::NAN; p];
    let mut rmse = vec![f64::NAN; p];
    let mut sd = vec![None; p];
    let mut mean_se = vec![f64::NAN; p];
    let mut rejection = vec![f64::NAN; p];
    for j in 0..p {
        let est: Vec<f64> = ok.iter().map(|f| f.estimates[j]).collect();
        if est.is_empty() {
            continue;
        }
        let (m, s) = mean_sd(&est);
        bias[j] = m - truth[j];
        rmse[j] = (est.iter().map(|e| (e - truth[j]).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        sd[j] = s;
        mean_se[j] = ok.iter().map(|f| f.se[j]).sum::<f64>() / ok.len() as f64;
        let rej = ok
            .iter()
            .filter(|f| wald(f.estimates[j], f.se[j], truth[j], j).map(|w| w.p_value < level).unwrap_or(false))
            .count();
        rejection[j] = rej as f64 / ok.len() as f64;
    }
    let ad: Vec<f64> = ok.iter().map(|f| f.alpha_disc).collect();
    let ac: Vec<f64> = ok.iter().map(|f| f.alpha_cont).collect();
    let (adm, ads) = mean_sd(&ad);
    let (acm, acs) = mean_sd(&ac);
    let zero = |v: &[f64]| v.iter().filter(|&&a| a == 0.0).count() as f64 / v.len().max(1) as f64;
    EstimatorSummary {
        estimator: kind,
        used: ok.len(),
        failed: fits.len() - ok.len(),
        tmse: rmse.iter().map(|r| r * r).sum(),
        bias,
        rmse,
        sd,
        mean_se,
        rejection,
        alpha_disc_mean: adm,
        alpha_disc_sd: ads,
        alpha_cont_mean: acm,
        alpha_cont_sd: acs,
        alpha_disc_zero: zero(&ad),
        alpha_cont_zero: zero(&ac),
    }
}

/// Runs all replications of `spec`. Serial and parallel runs give identical
/// summaries.
pub fn run_monte_carlo(spec: &ScenarioSpec, optimizer: &OptimizerConfig, exec: Execution) -> Result<MonteCarloSummary> {
    spec.validate()?;
    let replications = map_indexed(spec.reps, exec, |rep| match scenario_sample(spec, rep as u64) {
        Ok(obs) => fit_replication(&obs, spec, optimizer),
        Err(e) => spec.estimators.iter().map(|_| ReplicationFit::failed(e.to_string())).collect(),
    });
    let truth = spec.truth.to_vec();
    let estimators: Vec<EstimatorSummary> = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(e, &kind)| {
            let fits: Vec<&ReplicationFit> = replications.iter().map(|r| &r[e]).collect();
            summarize(kind, &fits, &truth, spec.level)
        })
        .collect();
    let mut tmse_ratios = Vec::new();
    for (a, ea) in estimators.iter().enumerate() {
        for eb in &estimators[a + 1..] {
            tmse_ratios.push(TmseRatio {
                numerator: ea.estimator,
                denominator: eb.estimator,
                ratio: ea.tmse / eb.tmse,
            });
        }
    }
    let reliable = estimators.iter().all(|e| e.failed as f64 <= 0.01 * spec.reps as f64);
    Ok(MonteCarloSummary {
        spec: spec.clone(),
        labels: param_labels(&spec.truth),
        truth,
        estimators,
        tmse_ratios,
        reliable,
        replications,
    })
}

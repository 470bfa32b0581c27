//! BFGS maximization with Armijo backtracking, plus starting values.

use crate::data::{ObservationSet, ParamVector};
use crate::error::{Error, Result};
use crate::link::LinkSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative rounding band of the objectives: a trial point whose value falls
/// short by less than this is accepted when its gradient is smaller.
const NOISE_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Tolerance on the max-abs gradient.
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    /// Largest max-abs step attempted in one iteration.
    pub max_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            step_tol: 1e-10,
            max_iters: 500,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            max_step: 10.0,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.step_tol > 0.0
            && self.max_iters > 0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.armijo_c > 0.0
            && self.max_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid optimizer configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub objective_path: Vec<f64>,
    /// Set when the iterates keep moving while the objective has flattened out.
    pub diverging: bool,
    pub message: String,
}

fn amax(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Probe<F> {
    f: F,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Probe<F> {
    fn eval(&mut self, x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let (v, g) = (self.f)(x.as_slice());
        if v.is_finite() && g.iter().all(|c| c.is_finite()) {
            Some((v, DVector::from_vec(g)))
        } else {
            None
        }
    }

    /// Negative Hessian by central differences of the gradient.
    fn neg_hessian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = x.len();
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            let step = 1e-5 * (1.0 + x[j].abs());
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += step;
            dn[j] -= step;
            let (_, gu) = self.eval(&up)?;
            let (_, gd) = self.eval(&dn)?;
            h.set_column(j, &(-(gu - gd) / (2.0 * step)));
        }
        Some((&h + h.transpose()) * 0.5)
    }
}

/// Maximizes a smooth function given a callable returning `(value, gradient)`.
///
/// Exceeding `max_iters` yields a report with `converged = false`, not an error.
pub fn maximize<F>(f: F, start: &[f64], config: &OptimizerConfig) -> Result<(Vec<f64>, ConvergenceReport)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    config.validate()?;
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("optimizer start contains non-finite values".into()));
    }
    let mut probe = Probe { f };
    let p = start.len();
    let mut x = DVector::from_column_slice(start);
    let (mut fx, mut g) = probe
        .eval(&x)
        .ok_or_else(|| Error::Input("objective is not finite at the starting point".into()))?;
    let mut report = ConvergenceReport {
        objective_path: vec![fx],
        ..Default::default()
    };
    let identity = DMatrix::<f64>::identity(p, p);
    let mut hinv = identity.clone();
    let mut fresh = true;
    let mut flat_streak = 0;

    for iter in 0..config.max_iters {
        report.iterations = iter;
        let gnorm = amax(&g);
        if gnorm <= config.grad_tol {
            let newton = amax(&(&hinv * &g));
            if newton <= config.grad_tol.sqrt() * (1.0 + amax(&x)) {
                report.converged = true;
                break;
            }
        }
        let mut d = &hinv * &g;
        if g.dot(&d) <= 0.0 {
            hinv = identity.clone();
            fresh = true;
            d = g.clone();
        }
        let dmax = amax(&d);
        if dmax > config.max_step {
            d *= config.max_step / dmax;
        }
        let slope = g.dot(&d);
        let noise = NOISE_BAND * (1.0 + fx.abs());
        let mut t = 1.0;
        let mut accepted = None;
        while t * amax(&d) >= config.step_tol * (1.0 + amax(&x)) {
            let xn = &x + &d * t;
            if let Some((fn_, gn)) = probe.eval(&xn) {
                let armijo = fn_ >= fx + config.armijo_c * t * slope;
                let within_noise = fn_ >= fx - noise && amax(&gn) < gnorm;
                if armijo || within_noise {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t *= config.backtrack_factor;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if !fresh {
                hinv = identity.clone();
                fresh = true;
                continue;
            }
            report.message = "line search could not make progress".into();
            break;
        };
        let s = &xn - &x;
        let y = &g - &gn;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv = &identity * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let left = &identity - &s * y.transpose() * rho;
            hinv = &left * &hinv * left.transpose() + &s * s.transpose() * rho;
            fresh = false;
        }
        let big_step = amax(&s) >= 1e-2 * (1.0 + amax(&x));
        let flat = (fn_ - fx).abs() <= config.step_tol * (1.0 + fx.abs());
        flat_streak = if big_step && flat { flat_streak + 1 } else { 0 };
        x = xn;
        fx = fn_;
        g = gn;
        report.objective_path.push(fx);
        if flat_streak >= 5 {
            report.diverging = true;
            report.message = "objective flat while parameters keep moving; estimates diverge".into();
            report.iterations = iter + 1;
            break;
        }
        report.iterations = iter + 1;
    }

    if !report.converged && !report.diverging {
        polish(&mut probe, &mut x, &mut fx, &mut g, config, &mut report);
    }
    report.final_grad_norm = amax(&g);
    if report.converged && report.message.is_empty() {
        report.message = "converged".into();
    } else if !report.converged && report.message.is_empty() {
        report.message = format!("gradient norm {:.3e} after {} iterations", report.final_grad_norm, report.iterations);
    }
    Ok((x.as_slice().to_vec(), report))
}

/// Newton iterations with a finite-difference Hessian of the analytic gradient.
fn polish<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    probe: &mut Probe<F>,
    x: &mut DVector<f64>,
    fx: &mut f64,
    g: &mut DVector<f64>,
    config: &OptimizerConfig,
    report: &mut ConvergenceReport,
) {
    for _ in 0..10 {
        let Some(h) = probe.neg_hessian(x) else { return };
        let Some(chol) = h.clone().cholesky() else { return };
        let step = chol.solve(g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let xn = &*x + &step * t;
            if let Some((fn_, gn)) = probe.eval(&xn) {
                let noise = NOISE_BAND * (1.0 + fx.abs());
                if fn_ >= *fx - noise && amax(&gn) < amax(g) {
                    *x = xn;
                    *fx = fn_;
                    *g = gn;
                    report.objective_path.push(*fx);
                    report.iterations += 1;
                    moved = true;
                    break;
                }
            }
            t *= config.backtrack_factor;
        }
        let newton = amax(&step);
        if amax(g) <= config.grad_tol && newton <= config.grad_tol.sqrt() * (1.0 + amax(x)) {
            report.converged = true;
            report.message.clear();
            return;
        }
        if !moved {
            return;
        }
    }
}

fn least_squares(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// Starting values for `(κ, β, γ)`.
///
/// `κ` regresses `g_ϑ((yᶜ + ½)/2)` on `S`; `β` regresses `g_μ(y)` on `X` over
/// the continuous subsample; `γ` fits the constant `g_φ(φ̃)` on `Z`, where `φ̃`
/// is the method-of-moments precision from the `β` residuals.
pub fn default_start(obs: &ObservationSet, links: &LinkSpec) -> Result<ParamVector> {
    obs.check_rank()?;
    let yc = &obs.partition().indicator;
    let target = DVector::from_iterator(obs.n(), yc.iter().map(|&v| links.theta.evaluate((v + 0.5) / 2.0)));
    let kappa = least_squares(obs.s(), &target)?;

    let idx = obs.continuous_indices();
    let (xc, zc) = obs.continuous_design();
    let ym = DVector::from_iterator(idx.len(), idx.iter().map(|&i| links.mu.evaluate(obs.y()[i])));
    let beta = least_squares(&xc, &ym)?;
    let fitted = &xc * &beta;
    let mut var_sum = 0.0;
    let mut mv_sum = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        let mu = links.mu.inverse(fitted[k]);
        var_sum += (obs.y()[i] - mu).powi(2);
        mv_sum += mu * (1.0 - mu);
    }
    let m = idx.len() as f64;
    let dof = (m - xc.ncols() as f64).max(1.0);
    let sigma2 = var_sum / dof;
    let phi = if sigma2 > 0.0 { mv_sum / m / sigma2 - 1.0 } else { f64::NAN };
    let phi = if phi.is_finite() && phi > 0.0 { phi } else { 1.0 };
    let zt = DVector::from_element(idx.len(), links.phi.evaluate(phi));
    let gamma = least_squares(&zc, &zt)?;
    Ok(ParamVector::new(
        kappa.iter().copied().collect(),
        beta.iter().copied().collect(),
        gamma.iter().copied().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Inflation;
    use crate::error::Submodel;
    use crate::special::expit;
    use proptest::prelude::*;

    fn quadratic(a: Vec<f64>) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) {
        move |x: &[f64]| {
            let v = -x.iter().zip(&a).map(|(xi, ai)| (xi - ai).powi(2)).sum::<f64>();
            let g = x.iter().zip(&a).map(|(xi, ai)| -2.0 * (xi - ai)).collect();
            (v, g)
        }
    }

    #[test]
    fn quadratic_maximum() {
        let a = vec![1.5, -2.0, 0.25];
        let (x, rep) = maximize(quadratic(a.clone()), &[10.0, 10.0, -7.0], &OptimizerConfig::default()).unwrap();
        assert!(rep.converged);
        for (xi, ai) in x.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-8);
        }
        assert!(rep.final_grad_norm <= 1e-8);
    }

    #[test]
    fn rosenbrock_minimum() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let g = vec![2.0 * (1.0 - a) + 400.0 * a * (b - a * a), -200.0 * (b - a * a)];
            (v, g)
        };
        let (x, rep) = maximize(f, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn separable_logistic_is_flagged() {
        let data = [(-2.0, 0.0), (-1.0, 0.0), (1.0, 1.0), (2.0, 1.0)];
        let f = move |b: &[f64]| {
            let mut v = 0.0;
            let mut g = 0.0;
            for &(x, y) in &data {
                let p = expit(b[0] * x);
                v += if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
                g += (y - p) * x;
            }
            (v, vec![g])
        };
        let (x, rep) = maximize(f, &[0.0], &OptimizerConfig::default()).unwrap();
        assert!(!rep.converged);
        assert!(rep.diverging, "{rep:?}");
        assert!(x[0] > 10.0);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let cfg = OptimizerConfig { max_iters: 2, ..Default::default() };
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (-((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)), vec![2.0 * (1.0 - a) + 400.0 * a * (b - a * a), -200.0 * (b - a * a)])
        };
        let (_, rep) = maximize(f, &[-1.2, 1.0], &cfg).unwrap();
        assert!(!rep.converged);
    }

    #[test]
    fn non_finite_start_is_input_error() {
        assert!(matches!(maximize(quadratic(vec![0.0]), &[f64::NAN], &OptimizerConfig::default()), Err(Error::Input(_))));
        let bad = |_: &[f64]| (f64::NAN, vec![0.0]);
        assert!(matches!(maximize(bad, &[0.0], &OptimizerConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn deterministic() {
        let run = || maximize(quadratic(vec![3.0, -1.0]), &[0.0, 0.0], &OptimizerConfig::default()).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn start_values_intercept_only() {
        let y = vec![0.0, 0.2, 0.0, 0.4, 0.6, 0.0, 0.3, 0.5];
        let n = y.len();
        let one = DMatrix::from_element(n, 1, 1.0);
        let obs = ObservationSet::new(Inflation::Zero, y.clone(), one.clone(), one.clone(), one).unwrap();
        let links = LinkSpec::default();
        let st = default_start(&obs, &links).unwrap();
        // 3 of 8 inflated: mean of logit(0.75)·3 and logit(0.25)·5.
        let expect = (3.0 * 3f64.ln() - 5.0 * 3f64.ln()) / 8.0;
        assert!((st.kappa[0] - expect).abs() < 1e-12);
        let m: f64 = y.iter().filter(|&&v| v > 0.0).map(|&v| (v / (1.0 - v)).ln()).sum::<f64>() / 5.0;
        assert!((st.beta[0] - m).abs() < 1e-12);
        assert!(st.gamma[0].is_finite());
    }

    #[test]
    fn balanced_indicator_gives_zero_kappa() {
        let y = vec![0.0, 0.2, 0.0, 0.4, 0.0, 0.6];
        let n = y.len();
        let one = DMatrix::from_element(n, 1, 1.0);
        let obs = ObservationSet::new(Inflation::Zero, y, one.clone(), one.clone(), one).unwrap();
        assert!(default_start(&obs, &LinkSpec::default()).unwrap().kappa[0].abs() < 1e-14);
    }

    #[test]
    fn start_rejects_collinear_precision_design() {
        let n = 10;
        let y: Vec<f64> = (0..n).map(|i| if i < 3 { 0.0 } else { 0.1 * i as f64 - 0.05 }).collect();
        let one = DMatrix::from_element(n, 1, 1.0);
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else if i < 3 { i as f64 } else { 3.0 });
        let obs = ObservationSet::new(Inflation::Zero, y, one.clone(), one, z).unwrap();
        match default_start(&obs, &LinkSpec::default()) {
            Err(Error::RankDeficient { submodel, .. }) => assert_eq!(submodel, Submodel::Precision),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn quadratic_from_any_start(x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
            let (x, rep) = maximize(quadratic(vec![0.7, -0.3]), &[x0, x1], &OptimizerConfig::default()).unwrap();
            prop_assert!(rep.converged);
            prop_assert!((x[0] - 0.7).abs() < 1e-8 && (x[1] + 0.3).abs() < 1e-8);
            let path = &rep.objective_path;
            for w in path.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
            }
        }
    }
}

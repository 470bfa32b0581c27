//! `infbeta simulate`: Monte Carlo study from a scenario file.

use crate::write_file;
use anyhow::{Context, Result};
use robust_infbeta::optimizer::OptimizerConfig;
use robust_infbeta::simulation::{run_monte_carlo, MonteCarloSummary, ScenarioSpec};
use robust_infbeta::Execution;
use std::fmt::Write as _;
use std::path::Path;

/// Overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct SimulateOverrides {
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

pub fn load_scenario(path: &Path, ov: &SimulateOverrides) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let mut spec = ScenarioSpec::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(r) = ov.reps {
        spec.reps = r;
    }
    if let Some(s) = ov.seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_simulate(config: &Path, out: &Path, ov: &SimulateOverrides, exec: Execution) -> Result<MonteCarloSummary> {
    let spec = load_scenario(config, ov)?;
    let summary = run_monte_carlo(&spec, &OptimizerConfig::default(), exec)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_file(&out.join("bias_rmse.csv"), &bias_rmse_csv(&summary)?)?;
    write_file(&out.join("alpha.csv"), &alpha_csv(&summary)?)?;
    write_file(&out.join("tmse.csv"), &tmse_csv(&summary)?)?;
    write_file(&out.join("levels.csv"), &levels_csv(&summary)?)?;
    write_file(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    write_file(&out.join("report.txt"), &report(&summary)?)?;
    Ok(summary)
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

fn fixed3(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.3}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Bias, RMSE, Monte Carlo mean and sd, and mean reported se.
pub fn bias_rmse_csv(s: &MonteCarloSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "parameter", "truth", "bias", "rmse", "mean", "sd", "mean_se"])?;
    for e in &s.estimators {
        for (j, label) in s.labels.iter().enumerate() {
            w.write_record([
                e.estimator.label().to_string(),
                label.clone(),
                num(s.truth[j]),
                num(e.bias[j]),
                num(e.rmse[j]),
                num(s.truth[j] + e.bias[j]),
                opt(e.sd[j]),
                num(e.mean_se[j]),
            ])?;
        }
    }
    finish(w)
}

pub fn alpha_csv(s: &MonteCarloSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "part", "mean", "sd", "share_zero"])?;
    for e in &s.estimators {
        w.write_record([e.estimator.label(), "discrete", &num(e.alpha_disc_mean), &opt(e.alpha_disc_sd), &num(e.alpha_disc_zero)])?;
        w.write_record([e.estimator.label(), "continuous", &num(e.alpha_cont_mean), &opt(e.alpha_cont_sd), &num(e.alpha_cont_zero)])?;
    }
    finish(w)
}

pub fn tmse_csv(s: &MonteCarloSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["numerator", "denominator", "ratio"])?;
    for r in &s.tmse_ratios {
        w.write_record([r.numerator.label(), r.denominator.label(), &num(r.ratio)])?;
    }
    finish(w)
}

pub fn levels_csv(s: &MonteCarloSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "parameter", "nominal", "rejection_rate"])?;
    for e in &s.estimators {
        for (j, label) in s.labels.iter().enumerate() {
            w.write_record([e.estimator.label(), label, &num(s.spec.level), &num(e.rejection[j])])?;
        }
    }
    finish(w)
}

pub fn report(s: &MonteCarloSummary) -> Result<String> {
    let mut out = String::new();
    let spec = &s.spec;
    writeln!(
        out,
        "{}: n = {}, {} replications, seed {}, contamination continuous = {}, discrete = {}, rate = {}",
        if spec.name.is_empty() { "scenario" } else { &spec.name },
        spec.n,
        spec.reps,
        spec.seed,
        spec.contaminate_continuous,
        spec.contaminate_discrete,
        spec.rate
    )?;
    if !s.reliable {
        writeln!(out, "warning: more than 1% of replications failed for some estimator")?;
    }
    writeln!(out)?;
    write!(out, "{:<10}", "")?;
    for e in &s.estimators {
        write!(out, "{:>20}", e.estimator.label())?;
    }
    writeln!(out)?;
    write!(out, "{:<10}", "")?;
    for _ in &s.estimators {
        write!(out, "{:>10}{:>10}", "bias", "RMSE")?;
    }
    writeln!(out)?;
    for (j, label) in s.labels.iter().enumerate() {
        write!(out, "{label:<10}")?;
        for e in &s.estimators {
            write!(out, "{:>10.3}{:>10.3}", e.bias[j], e.rmse[j])?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    for e in &s.estimators {
        writeln!(
            out,
            "{}: used {}, failed {}, TMSE {:.4}, alpha discrete {:.3} (sd {}), continuous {:.3} (sd {})",
            e.estimator.label(),
            e.used,
            e.failed,
            e.tmse,
            e.alpha_disc_mean,
            fixed3(e.alpha_disc_sd),
            e.alpha_cont_mean,
            fixed3(e.alpha_cont_sd)
        )?;
    }
    for r in &s.tmse_ratios {
        writeln!(out, "TMSE {}/{} = {:.3}", r.numerator.label(), r.denominator.label(), r.ratio)?;
    }
    Ok(out)
}

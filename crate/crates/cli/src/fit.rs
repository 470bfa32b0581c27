//! `infbeta fit`: estimation on a CSV file and the report files.

use crate::dataset::{build_observations, ClampLog, Dataset, ModelFormula};
use crate::{write_file, NumericalFailure};
use anyhow::{bail, Context, Result};
use robust_infbeta::inference::wald;
use robust_infbeta::{fit, AlphaChoice, EstimatorKind, FitOptions, FitResult, ObservationSet};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;

/// `auto` or a fixed tuning constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AlphaArg::Auto);
        }
        s.parse::<f64>()
            .map(AlphaArg::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

impl AlphaArg {
    fn choice(self, default: AlphaChoice) -> AlphaChoice {
        match self {
            AlphaArg::Auto => default,
            AlphaArg::Fixed(a) => AlphaChoice::Fixed(a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitRequest {
    pub csv: PathBuf,
    pub formula: ModelFormula,
    pub estimators: Vec<EstimatorKind>,
    pub alpha_disc: AlphaArg,
    pub alpha_cont: AlphaArg,
    pub clamp: Option<f64>,
    pub drop_rows: Vec<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Everything `diagnose` needs, in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub schema_version: u32,
    pub source: String,
    pub formula: ModelFormula,
    pub clamp: Option<f64>,
    pub clamped: ClampLog,
    pub dropped_rows: Vec<usize>,
    pub seed: u64,
    /// True when no `--seed` was given and one was drawn from the OS.
    pub seed_from_entropy: bool,
    pub data: Dataset,
    pub fits: Vec<FitResult>,
}

impl FitArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read fit artifact {}", path.display()))?;
        let art: Self = serde_json::from_str(&text).with_context(|| format!("{} is not a fit artifact", path.display()))?;
        if art.schema_version != SCHEMA_VERSION {
            bail!("fit artifact schema {} is not supported (expected {SCHEMA_VERSION})", art.schema_version);
        }
        Ok(art)
    }

    /// Rebuilds the fitted sample.
    pub fn observations(&self) -> Result<ObservationSet> {
        Ok(build_observations(&self.formula, &self.data, self.clamp)?.0)
    }

    pub fn get(&self, kind: Option<EstimatorKind>) -> Result<&FitResult> {
        match kind {
            None => Ok(&self.fits[0]),
            Some(k) => self
                .fits
                .iter()
                .find(|f| f.estimator == k)
                .with_context(|| format!("the artifact holds no {k} fit")),
        }
    }
}

pub fn cmd_fit(req: &FitRequest) -> Result<FitArtifact> {
    if req.estimators.is_empty() {
        bail!("no estimator requested");
    }
    let full = Dataset::from_csv(&req.csv, &req.formula.columns())?;
    let data = full.drop_rows(&req.drop_rows)?;
    let (obs, clamped) = build_observations(&req.formula, &data, req.clamp)?;
    let (seed, seed_from_entropy) = match req.seed {
        Some(s) => (s, false),
        None => (rand::random::<u64>(), true),
    };
    let defaults = FitOptions::default();
    let opts = FitOptions {
        links: req.formula.links,
        alpha_disc: req.alpha_disc.choice(defaults.alpha_disc),
        alpha_cont: req.alpha_cont.choice(defaults.alpha_cont),
        ..defaults
    };
    let mut fits = Vec::new();
    for &kind in &req.estimators {
        let f = fit(&obs, kind, &opts).with_context(|| format!("{kind} fit failed"))?;
        if !f.converged() {
            let r = if f.discrete_report.converged { &f.continuous_report } else { &f.discrete_report };
            return Err(NumericalFailure(format!("{kind} fit did not converge: {}", r.message)).into());
        }
        fits.push(f);
    }
    let art = FitArtifact {
        schema_version: SCHEMA_VERSION,
        source: req.csv.display().to_string(),
        formula: req.formula.clone(),
        clamp: req.clamp,
        clamped,
        dropped_rows: req.drop_rows.clone(),
        seed,
        seed_from_entropy,
        data,
        fits,
    };
    std::fs::create_dir_all(&req.out).with_context(|| format!("cannot create {}", req.out.display()))?;
    write_file(&req.out.join("fit.json"), &serde_json::to_string_pretty(&art)?)?;
    write_file(&req.out.join("coefficients.csv"), &coefficients_csv(&art)?)?;
    write_file(&req.out.join("weights.csv"), &weights_csv(&art)?)?;
    write_file(&req.out.join("report.txt"), &report(&art)?)?;
    Ok(art)
}

/// One Wald row per coefficient: `(submodel, term, estimate, se, z, p)`.
pub fn coefficient_rows(f: &FitResult) -> Result<Vec<(String, String, f64, f64, f64, f64)>> {
    let est = f.params.to_vec();
    Ok(f.labels()
        .into_iter()
        .enumerate()
        .map(|(j, (part, term))| {
            let se = f.covariance.se[j];
            match wald(est[j], se, 0.0, j) {
                Ok(w) => (part, term, w.estimate, w.se, w.z, w.p_value),
                Err(_) => (part, term, est[j], se, f64::NAN, f64::NAN),
            }
        })
        .collect())
}

fn coefficients_csv(art: &FitArtifact) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "submodel", "term", "estimate", "se", "z", "p_value"])?;
    for f in &art.fits {
        for (part, term, e, se, z, p) in coefficient_rows(f)? {
            w.write_record([f.estimator.name(), &part, &term, &e.to_string(), &se.to_string(), &z.to_string(), &p.to_string()])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn weights_csv(art: &FitArtifact) -> Result<String> {
    let obs = art.observations()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "row", "y", "weight"])?;
    for f in &art.fits {
        for (k, &i) in obs.continuous_indices().iter().enumerate() {
            w.write_record([f.estimator.name(), &art.data.rows[i].to_string(), &obs.y()[i].to_string(), &f.weights[k].to_string()])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn submodel_heading(part: &str, art: &FitArtifact) -> String {
    let l = art.formula.links;
    match part {
        "discrete" => format!("{}(theta)", l.theta),
        "mean" => format!("{}(mu)", l.mu),
        _ => format!("{}(phi)", l.phi),
    }
}

/// Estimate, se, z-stat and p-value per coefficient, one column block per estimator.
pub fn report(art: &FitArtifact) -> Result<String> {
    let mut s = String::new();
    let first = &art.fits[0];
    writeln!(s, "{}-inflated beta regression: {}", art.formula.inflation.value(), art.formula.display())?;
    let zeros = first.n - first.n_dagger;
    writeln!(
        s,
        "data: {} ({} rows used, {} at the point mass, {} in (0,1))",
        art.source, first.n, zeros, first.n_dagger
    )?;
    if !art.dropped_rows.is_empty() {
        let d: Vec<String> = art.dropped_rows.iter().map(|r| format!("#{r}")).collect();
        writeln!(s, "dropped rows: {}", d.join(", "))?;
    }
    for (row, old, new) in &art.clamped {
        writeln!(s, "row #{row}: response {old} clamped to {new}")?;
    }
    writeln!(s, "seed: {}{}", art.seed, if art.seed_from_entropy { " (drawn; pass --seed to fix)" } else { "" })?;
    writeln!(s)?;

    let rows: Vec<_> = art.fits.iter().map(coefficient_rows).collect::<Result<_>>()?;
    let block = 42;
    write!(s, "{:<18}", "")?;
    for f in &art.fits {
        write!(s, "{:^block$}", f.estimator.label())?;
    }
    writeln!(s)?;
    write!(s, "{:<18}", "")?;
    for _ in &art.fits {
        write!(s, "{:>10}{:>10}{:>11}{:>10} ", "Estimate", "se", "z-stat", "p-value")?;
    }
    writeln!(s)?;
    let mut last_part = String::new();
    for j in 0..rows[0].len() {
        let part = &rows[0][j].0;
        if *part != last_part {
            writeln!(s, "{}", submodel_heading(part, art))?;
            last_part = part.clone();
        }
        write!(s, "  {:<16}", rows[0][j].1)?;
        for r in &rows {
            let (_, _, e, se, z, p) = r[j];
            write!(s, "{e:>10.3}{se:>10.3}{z:>11.3}{p:>10.3} ")?;
        }
        writeln!(s)?;
    }
    writeln!(s)?;
    for f in &art.fits {
        writeln!(
            s,
            "{}: alpha (discrete) = {:.2}, alpha (continuous) = {:.2}; iterations {} + {}, |grad| {:.1e} / {:.1e}",
            f.estimator.label(),
            f.alpha.alpha_disc,
            f.alpha.alpha_cont,
            f.discrete_report.iterations,
            f.continuous_report.iterations,
            f.discrete_report.final_grad_norm,
            f.continuous_report.final_grad_norm
        )?;
    }
    let obs = art.observations()?;
    for f in art.fits.iter().filter(|f| f.alpha.alpha_cont > 0.0) {
        let mut w: Vec<(f64, usize)> = f
            .weights
            .iter()
            .zip(obs.continuous_indices())
            .map(|(&w, &i)| (w, art.data.rows[i]))
            .collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        let low: Vec<String> = w.iter().take(3).map(|(w, r)| format!("#{r} ({w:.3})")).collect();
        writeln!(s, "{} lowest weights: {}", f.estimator.label(), low.join(", "))?;
    }
    Ok(s)
}

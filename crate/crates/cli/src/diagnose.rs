//! `infbeta diagnose`: residuals, simulated envelopes and robustness weights
//! from a fit artifact.

use crate::fit::FitArtifact;
use crate::write_file;
use anyhow::Result;
use robust_infbeta::diagnostics::{by_part_residuals, envelope, quantile_residuals, Envelope, EnvelopeConfig};
use robust_infbeta::{EstimatorKind, Execution};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnoseKind {
    Residuals,
    Envelope,
    Weights,
}

#[derive(Debug, Clone)]
pub struct DiagnoseRequest {
    pub artifact: PathBuf,
    pub kind: DiagnoseKind,
    /// Which fit in the artifact; the first one when absent.
    pub estimator: Option<EstimatorKind>,
    /// Overrides the seed stored in the artifact.
    pub seed: Option<u64>,
    pub n_sim: usize,
    pub band: f64,
    pub refit: bool,
    pub svg: bool,
    pub out: PathBuf,
}

/// What was written, for the console summary.
#[derive(Debug, Clone)]
pub enum Diagnosis {
    Residuals { rows: usize, warnings: Vec<String> },
    Envelope(Envelope),
    Weights { lowest_row: Option<(usize, f64)> },
}

pub fn cmd_diagnose(req: &DiagnoseRequest, exec: Execution) -> Result<Diagnosis> {
    let art = FitArtifact::load(&req.artifact)?;
    let fit = art.get(req.estimator)?;
    let obs = art.observations()?;
    let seed = req.seed.unwrap_or(art.seed);
    std::fs::create_dir_all(&req.out)?;
    let tag = fit.estimator.name();
    match req.kind {
        DiagnoseKind::Residuals => {
            let q = quantile_residuals(&obs, &fit.links, &fit.params, seed)?;
            let bp = by_part_residuals(&obs, &fit.links, &fit.params)?;
            let mut swr2 = vec![None; obs.n()];
            for (k, &i) in bp.continuous_index.iter().enumerate() {
                swr2[i] = bp.continuous[k];
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["row", "y", "quantile", "deviance", "swr2"])?;
            for i in 0..obs.n() {
                w.write_record([
                    art.data.rows[i].to_string(),
                    obs.y()[i].to_string(),
                    q.values[i].to_string(),
                    bp.values[i].to_string(),
                    swr2[i].map_or_else(|| "NA".into(), |v| v.to_string()),
                ])?;
            }
            write_file(&req.out.join(format!("residuals_{tag}.csv")), &String::from_utf8(w.into_inner()?)?)?;
            Ok(Diagnosis::Residuals { rows: obs.n(), warnings: bp.warnings })
        }
        DiagnoseKind::Envelope => {
            let cfg = EnvelopeConfig {
                n_sim: req.n_sim,
                band: req.band,
                seed,
                refit: req.refit,
                execution: exec,
            };
            let env = envelope(&obs, fit, &cfg)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["theoretical", "observed", "lower", "median", "upper", "inside"])?;
            for r in &env.rows {
                w.write_record([
                    r.theoretical.to_string(),
                    r.observed.to_string(),
                    r.lower.to_string(),
                    r.median.to_string(),
                    r.upper.to_string(),
                    r.inside().to_string(),
                ])?;
            }
            write_file(&req.out.join(format!("envelope_{tag}.csv")), &String::from_utf8(w.into_inner()?)?)?;
            if req.svg {
                write_file(&req.out.join(format!("envelope_{tag}.svg")), &envelope_svg(&env, fit.estimator.label()))?;
            }
            Ok(Diagnosis::Envelope(env))
        }
        DiagnoseKind::Weights => {
            let idx = obs.continuous_indices();
            let mut rows: Vec<(usize, f64, f64)> = idx
                .iter()
                .zip(&fit.weights)
                .map(|(&i, &wt)| (art.data.rows[i], obs.y()[i], wt))
                .collect();
            rows.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["rank", "row", "y", "weight"])?;
            for (k, (row, y, wt)) in rows.iter().enumerate() {
                w.write_record([(k + 1).to_string(), row.to_string(), y.to_string(), wt.to_string()])?;
            }
            write_file(&req.out.join(format!("weights_{tag}.csv")), &String::from_utf8(w.into_inner()?)?)?;
            Ok(Diagnosis::Weights {
                lowest_row: rows.last().map(|r| (r.0, r.2)),
            })
        }
    }
}

/// Normal plot of the residuals with the simulated band.
pub fn envelope_svg(env: &Envelope, title: &str) -> String {
    let (w, h, m) = (480.0, 480.0, 48.0);
    let pts = |f: fn(&robust_infbeta::diagnostics::EnvelopeRow) -> f64| env.rows.iter().map(f).collect::<Vec<_>>();
    let xs = pts(|r| r.theoretical);
    let all: Vec<f64> = env.rows.iter().flat_map(|r| [r.observed, r.lower, r.upper]).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&all);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let line = |ys: &[f64], dash: &str| {
        let path: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        format!(r#"<polyline fill="none" stroke="black" stroke-width="1"{dash} points="{}"/>"#, path.join(" "))
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">normal quantiles</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, "{}", line(&pts(|r| r.lower), ""));
    let _ = writeln!(s, "{}", line(&pts(|r| r.upper), ""));
    let _ = writeln!(s, "{}", line(&pts(|r| r.median), r#" stroke-dasharray="4 3""#));
    for r in &env.rows {
        let colour = if r.inside() { "black" } else { "red" };
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{colour}"/>"#, sx(r.theoretical), sy(r.observed));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

pub fn summary_line(d: &Diagnosis, out: &Path) -> String {
    match d {
        Diagnosis::Residuals { rows, warnings } => {
            let mut s = format!("{rows} residuals written to {}", out.display());
            for w in warnings {
                s.push_str(&format!("\nwarning: {w}"));
            }
            s
        }
        Diagnosis::Envelope(e) => format!(
            "{:.1}% of residuals inside the {:.0}% envelope ({} simulations, seed {}, {} skipped)",
            100.0 * e.coverage(),
            100.0 * e.band,
            e.n_sim,
            e.seed,
            e.skipped
        ),
        Diagnosis::Weights { lowest_row } => match lowest_row {
            Some((row, w)) => format!("smallest weight {w:.4} at row #{row}"),
            None => "no observations in (0,1)".into(),
        },
    }
}

//! CSV input and the three-part model formula.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use robust_infbeta::{DesignNames, Inflation, LinkSpec, ObservationSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// `response ~ discrete | mean | precision`, each side a `+`-separated list of
/// columns with an implicit intercept. A single right-hand side is used for
/// all three submodels; `1` alone means intercept only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFormula {
    pub response: String,
    pub inflation: Inflation,
    pub discrete: Vec<String>,
    pub mean: Vec<String>,
    pub precision: Vec<String>,
    pub links: LinkSpec,
}

fn parse_terms(side: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for t in side.split('+').map(str::trim) {
        match t {
            "" => bail!("empty term in `{}`", side.trim()),
            "1" => {}
            "0" | "-1" => bail!("the intercept is always included; remove `{t}`"),
            _ if out.iter().any(|s: &String| s == t) => bail!("column `{t}` listed twice in `{}`", side.trim()),
            _ => out.push(t.to_string()),
        }
    }
    Ok(out)
}

impl ModelFormula {
    pub fn parse(text: &str, inflation: Inflation, links: LinkSpec) -> Result<Self> {
        let (lhs, rhs) = text
            .split_once('~')
            .ok_or_else(|| anyhow!("formula `{text}` has no `~`"))?;
        let response = lhs.trim();
        if response.is_empty() {
            bail!("formula `{text}` has no response column");
        }
        let sides: Vec<&str> = rhs.split('|').collect();
        let (d, m, p) = match sides.as_slice() {
            [all] => (parse_terms(all)?, parse_terms(all)?, parse_terms(all)?),
            [d, m, p] => (parse_terms(d)?, parse_terms(m)?, parse_terms(p)?),
            _ => bail!("formula needs one or three right-hand sides separated by `|`, got {}", sides.len()),
        };
        Ok(Self {
            response: response.to_string(),
            inflation,
            discrete: d,
            mean: m,
            precision: p,
            links,
        })
    }

    /// Every column the formula reads, response first.
    pub fn columns(&self) -> Vec<String> {
        let mut out = vec![self.response.clone()];
        for c in self.discrete.iter().chain(&self.mean).chain(&self.precision) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    pub fn display(&self) -> String {
        let side = |v: &[String]| if v.is_empty() { "1".to_string() } else { v.join(" + ") };
        format!(
            "{} ~ {} | {} | {}",
            self.response,
            side(&self.discrete),
            side(&self.mean),
            side(&self.precision)
        )
    }
}

/// Numeric columns read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// 1-based data row numbers (header excluded) of the rows kept.
    pub rows: Vec<usize>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    /// Reads the named columns; other columns may hold anything.
    pub fn from_csv(path: &Path, wanted: &[String]) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
        let header = rdr.headers().with_context(|| format!("cannot read the header of {}", path.display()))?.clone();
        let mut positions = Vec::with_capacity(wanted.len());
        for w in wanted {
            let pos = header.iter().position(|h| h.trim() == w).ok_or_else(|| {
                anyhow!(
                    "column `{w}` not found in {} (columns: {})",
                    path.display(),
                    header.iter().collect::<Vec<_>>().join(", ")
                )
            })?;
            positions.push(pos);
        }
        let mut columns: BTreeMap<String, Vec<f64>> = wanted.iter().map(|w| (w.clone(), Vec::new())).collect();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 1;
            let rec = rec.with_context(|| format!("malformed CSV record at data row {row}"))?;
            for (w, &pos) in wanted.iter().zip(&positions) {
                let raw = rec.get(pos).unwrap_or("").trim();
                if raw.is_empty() {
                    bail!("data row {row}, column `{w}`: missing value");
                }
                let v: f64 = raw
                    .parse()
                    .map_err(|_| anyhow!("data row {row}, column `{w}`: cannot parse `{raw}` as a number"))?;
                if !v.is_finite() {
                    bail!("data row {row}, column `{w}`: value `{raw}` is not finite");
                }
                columns.get_mut(w).expect("column registered").push(v);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            bail!("{} has no data rows", path.display());
        }
        Ok(Self { rows, columns })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Removes the listed 1-based data rows.
    pub fn drop_rows(&self, drop: &[usize]) -> Result<Self> {
        for d in drop {
            if !self.rows.contains(d) {
                bail!("--drop-rows: row {d} does not exist (data rows are 1..={})", self.rows.last().copied().unwrap_or(0));
            }
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !drop.contains(&self.rows[i])).collect();
        Ok(Self {
            rows: keep.iter().map(|&i| self.rows[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), keep.iter().map(|&i| v[i]).collect()))
                .collect(),
        })
    }
}

/// Response values moved by `--clamp`, as `(data row, old, new)`.
pub type ClampLog = Vec<(usize, f64, f64)>;

/// Builds the observation set. With `clamp = Some(ε)`, responses sitting on
/// the boundary opposite the point mass are moved inside by `ε`.
pub fn build_observations(formula: &ModelFormula, data: &Dataset, clamp: Option<f64>) -> Result<(ObservationSet, ClampLog)> {
    if let Some(e) = clamp {
        if !(e > 0.0 && e < 0.5) {
            bail!("--clamp must lie in (0, 0.5), got {e}");
        }
    }
    let other = match formula.inflation {
        Inflation::Zero => 1.0,
        Inflation::One => 0.0,
    };
    let mut log = Vec::new();
    let mut y = data.columns[&formula.response].clone();
    for (i, v) in y.iter_mut().enumerate() {
        let row = data.rows[i];
        if !(0.0..=1.0).contains(v) {
            bail!("data row {row}: response {v} is outside [0, 1]");
        }
        if *v == other {
            let Some(e) = clamp else {
                bail!(
                    "data row {row}: response {v} is outside the support of a {}-inflated model; pass --clamp to move it inside",
                    formula.inflation.value()
                );
            };
            let moved = if other == 1.0 { 1.0 - e } else { e };
            log.push((row, *v, moved));
            *v = moved;
        }
    }
    let n = data.len();
    let design = |cols: &[String]| {
        let mut m = DMatrix::from_element(n, cols.len() + 1, 1.0);
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in data.columns[c].iter().enumerate() {
                m[(i, j + 1)] = *v;
            }
        }
        m
    };
    let names = |cols: &[String]| std::iter::once("(Intercept)".to_string()).chain(cols.iter().cloned()).collect();
    let obs = ObservationSet::with_names(
        formula.inflation,
        y,
        design(&formula.discrete),
        design(&formula.mean),
        design(&formula.precision),
        DesignNames {
            discrete: names(&formula.discrete),
            mean: names(&formula.mean),
            precision: names(&formula.precision),
        },
    )?;
    Ok((obs, log))
}

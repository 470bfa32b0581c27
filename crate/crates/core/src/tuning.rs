//! Data-driven choice of the tuning constants by stability of standardized estimates.
//!
//! Grid points are held as integer multiples of the spacing so that repeated
//! visits to the same `α` hit the same cache entry.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Discrete,
    Continuous,
}

/// Where the next grid starts after a stability failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartRule {
    /// After the smallest failing `α_k`.
    #[default]
    Smallest,
    /// After the largest failing `α_k`.
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub start: f64,
    /// `α_{m1}`, the end of the first phase.
    pub first_phase_end: f64,
    pub spacing: f64,
    pub alpha_max: f64,
    /// Stability threshold `L`.
    pub l: f64,
    /// Number of consecutive stable pairs required after a restart.
    pub m: usize,
    #[serde(default)]
    pub restart: RestartRule,
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.start >= 0.0
            && self.start < self.first_phase_end
            && self.first_phase_end <= self.alpha_max
            && self.spacing > 0.0
            && self.l > 0.0
            && self.m >= 1;
        if !ok {
            return Err(Error::Input(format!("invalid tuning grid {self:?}")));
        }
        for (name, v) in [("start", self.start), ("first_phase_end", self.first_phase_end), ("alpha_max", self.alpha_max)] {
            let k = v / self.spacing;
            if (k - k.round()).abs() > 1e-9 {
                return Err(Error::Input(format!("{name} = {v} is not a multiple of the spacing {}", self.spacing)));
            }
        }
        Ok(())
    }

    fn index(&self, v: f64) -> usize {
        (v / self.spacing).round() as usize
    }

    pub fn alpha_at(&self, k: usize) -> f64 {
        // Rounded to the spacing's decimal precision so 0.06 prints as 0.06.
        let v = k as f64 * self.spacing;
        (v * 1e12).round() / 1e12
    }

    /// Points of the first phase, `start ..= first_phase_end`.
    pub fn first_phase(&self) -> Vec<f64> {
        (self.index(self.start)..=self.index(self.first_phase_end)).map(|k| self.alpha_at(k)).collect()
    }
}

/// `(continuous, discrete)` default grids.
pub fn default_grids() -> (TuningGrid, TuningGrid) {
    let continuous = TuningGrid {
        start: 0.0,
        first_phase_end: 0.2,
        spacing: 0.02,
        alpha_max: 0.5,
        l: 0.02,
        m: 3,
        restart: RestartRule::Smallest,
    };
    let discrete = TuningGrid {
        start: 0.0,
        first_phase_end: 0.5,
        spacing: 0.05,
        alpha_max: 1.0,
        l: 0.02,
        m: 3,
        restart: RestartRule::Smallest,
    };
    (continuous, discrete)
}

/// `p⁻¹ ‖z_k − z_{k+1}‖`.
pub fn sqv(z_k: &[f64], z_k1: &[f64]) -> Result<f64> {
    if z_k.len() != z_k1.len() || z_k.is_empty() {
        return Err(Error::Input(format!("sqv needs equal non-empty lengths, got {} and {}", z_k.len(), z_k1.len())));
    }
    let ss: f64 = z_k.iter().zip(z_k1).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(ss.sqrt() / z_k.len() as f64)
}

/// `δ̂_j / (√n · se_j)`.
pub fn standardized_estimates(estimates: &[f64], ses: &[f64], n: usize) -> Result<Vec<f64>> {
    if estimates.len() != ses.len() {
        return Err(Error::Input("estimates and standard errors differ in length".into()));
    }
    let rn = (n as f64).sqrt();
    estimates
        .iter()
        .zip(ses)
        .enumerate()
        .map(|(j, (&e, &s))| {
            if s > 0.0 && s.is_finite() {
                Ok(e / (rn * s))
            } else {
                Err(Error::Input(format!("standard error {j} is {s}")))
            }
        })
        .collect()
}

/// One scanned grid with the stability statistics between neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPhase {
    pub alphas: Vec<f64>,
    /// `sqv[k]` compares `alphas[k]` and `alphas[k+1]`; `None` when either fit failed.
    pub sqv: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    pub part: Part,
    pub phases: Vec<TuningPhase>,
    pub chosen_alpha: f64,
    pub fallback_to_zero: bool,
    /// Grid values at which the fit did not converge.
    pub failed_alphas: Vec<f64>,
}

impl TuningTrace {
    pub fn evaluated_alphas(&self) -> Vec<f64> {
        self.phases.iter().flat_map(|p| p.alphas.iter().copied()).collect()
    }

    pub fn sqv_values(&self) -> Vec<Option<f64>> {
        self.phases.iter().flat_map(|p| p.sqv.iter().copied()).collect()
    }
}

/// Output of one fit on the grid: standardized estimates, or `None` if the fit failed.
pub type GridFit = Option<Vec<f64>>;

/// Runs the stability search.
///
/// `fit(α)` returns the standardized estimate vector at `α` (see
/// [`standardized_estimates`]) or `None` when the fit does not converge.
pub fn select_alpha<F>(part: Part, mut fit: F, grid: &TuningGrid) -> Result<TuningTrace>
where
    F: FnMut(f64) -> GridFit,
{
    grid.validate()?;
    let mut cache: BTreeMap<usize, GridFit> = BTreeMap::new();
    let mut failed = Vec::new();
    let mut eval = |k: usize, cache: &mut BTreeMap<usize, GridFit>| -> GridFit {
        cache
            .entry(k)
            .or_insert_with(|| {
                let r = fit(grid.alpha_at(k));
                if r.is_none() {
                    failed.push(grid.alpha_at(k));
                }
                r
            })
            .clone()
    };
    let mut scan = |from: usize, to: usize, cache: &mut BTreeMap<usize, GridFit>| -> Result<(TuningPhase, Vec<usize>)> {
        let zs: Vec<GridFit> = (from..=to).map(|k| eval(k, cache)).collect();
        let mut sqvs = Vec::with_capacity(to - from);
        let mut failing = Vec::new();
        for k in 0..(to - from) {
            let s = match (&zs[k], &zs[k + 1]) {
                (Some(a), Some(b)) => Some(sqv(a, b)?),
                _ => None,
            };
            if !matches!(s, Some(v) if v < grid.l) {
                failing.push(from + k);
            }
            sqvs.push(s);
        }
        let phase = TuningPhase {
            alphas: (from..=to).map(|k| grid.alpha_at(k)).collect(),
            sqv: sqvs,
        };
        Ok((phase, failing))
    };
    let restart_after = |failing: &[usize]| match grid.restart {
        RestartRule::Smallest => failing[0] + 1,
        RestartRule::Largest => failing[failing.len() - 1] + 1,
    };

    let k0 = grid.index(grid.start);
    let k_m1 = grid.index(grid.first_phase_end);
    let k_max = grid.index(grid.alpha_max);
    let mut phases = Vec::new();

    let (phase, failing) = scan(k0, k_m1, &mut cache)?;
    phases.push(phase);
    let mut chosen = None;
    if failing.is_empty() {
        chosen = Some(grid.alpha_at(k0));
    } else {
        let mut start = restart_after(&failing);
        for round in 0..2 {
            if round == 1 {
                start = k0;
            }
            while start + grid.m <= k_max {
                let (phase, failing) = scan(start, start + grid.m, &mut cache)?;
                phases.push(phase);
                if failing.is_empty() {
                    chosen = Some(grid.alpha_at(start));
                    break;
                }
                start = restart_after(&failing);
            }
            if chosen.is_some() {
                break;
            }
        }
    }
    Ok(TuningTrace {
        part,
        phases,
        fallback_to_zero: chosen.is_none(),
        chosen_alpha: chosen.unwrap_or(0.0),
        failed_alphas: failed,
    })
}

//! Observation sets and parameter vectors.

use crate::error::{Error, Result, Submodel};
use crate::special::logit;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Location of the point mass: zero-inflated or one-inflated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inflation {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
}

impl Inflation {
    pub fn value(self) -> f64 {
        match self {
            Inflation::Zero => 0.0,
            Inflation::One => 1.0,
        }
    }

    pub fn from_value(c: f64) -> Result<Self> {
        if c == 0.0 {
            Ok(Inflation::Zero)
        } else if c == 1.0 {
            Ok(Inflation::One)
        } else {
            Err(Error::Input(format!("inflation point must be 0 or 1, got {c}")))
        }
    }
}

/// Index set of the observations strictly inside (0, 1) and the point-mass indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSample {
    pub continuous: Vec<usize>,
    pub n_dagger: usize,
    pub indicator: Vec<f64>,
}

/// `y* = logit(y)` and `y† = ln(1 − y)` on the continuous indices, exactly 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedResponse {
    pub y_star: Vec<f64>,
    pub y_dagger: Vec<f64>,
}

/// Column labels, used only for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignNames {
    pub discrete: Vec<String>,
    pub mean: Vec<String>,
    pub precision: Vec<String>,
}

impl DesignNames {
    pub fn generic(p0: usize, p1: usize, p2: usize) -> Self {
        let gen = |prefix: &str, p: usize| {
            (0..p)
                .map(|j| if j == 0 { "(Intercept)".to_string() } else { format!("{prefix}{j}") })
                .collect()
        };
        Self {
            discrete: gen("s", p0),
            mean: gen("x", p1),
            precision: gen("z", p2),
        }
    }
}

/// Responses on `(0,1) ∪ {c}` with the three design matrices. Immutable once built.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    c: Inflation,
    y: Vec<f64>,
    s: DMatrix<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    names: DesignNames,
    partition: PartitionedSample,
    transformed: TransformedResponse,
}

impl ObservationSet {
    pub fn new(
        c: Inflation,
        y: Vec<f64>,
        s: DMatrix<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
    ) -> Result<Self> {
        let names = DesignNames::generic(s.ncols(), x.ncols(), z.ncols());
        Self::with_names(c, y, s, x, z, names)
    }

    pub fn with_names(
        c: Inflation,
        y: Vec<f64>,
        s: DMatrix<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        names: DesignNames,
    ) -> Result<Self> {
        let n = y.len();
        for (m, sub) in [(&s, Submodel::Discrete), (&x, Submodel::Mean), (&z, Submodel::Precision)] {
            if m.nrows() != n {
                return Err(Error::Input(format!(
                    "{sub} design has {} rows but there are {n} responses",
                    m.nrows()
                )));
            }
            if m.ncols() == 0 {
                return Err(Error::Input(format!("{sub} design has no columns")));
            }
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "non-finite entry in the {sub} design at row {}",
                    pos % n + 1
                )));
            }
        }
        let p = s.ncols() + x.ncols() + z.ncols();
        if p >= n {
            return Err(Error::Input(format!(
                "need more observations than parameters (p0+p1+p2 = {p}, n = {n})"
            )));
        }
        if names.discrete.len() != s.ncols()
            || names.mean.len() != x.ncols()
            || names.precision.len() != z.ncols()
        {
            return Err(Error::Input("column names do not match design widths".into()));
        }
        let cv = c.value();
        for (i, &yi) in y.iter().enumerate() {
            let ok = yi == cv || (yi > 0.0 && yi < 1.0);
            if !ok {
                let hint = if yi == 0.0 || yi == 1.0 {
                    " (the non-inflated endpoint is outside the support; consider --clamp)"
                } else {
                    ""
                };
                return Err(Error::Domain(format!(
                    "response at row {} is {yi}, outside (0,1) ∪ {{{cv}}}{hint}",
                    i + 1
                )));
            }
        }
        let indicator: Vec<f64> = y.iter().map(|&v| if v == cv { 1.0 } else { 0.0 }).collect();
        let continuous: Vec<usize> = (0..n).filter(|&i| indicator[i] == 0.0).collect();
        let mut y_star = vec![0.0; n];
        let mut y_dagger = vec![0.0; n];
        for &i in &continuous {
            y_star[i] = logit(y[i]);
            y_dagger[i] = (-y[i]).ln_1p();
        }
        Ok(Self {
            c,
            partition: PartitionedSample {
                n_dagger: continuous.len(),
                continuous,
                indicator,
            },
            transformed: TransformedResponse { y_star, y_dagger },
            y,
            s,
            x,
            z,
            names,
        })
    }

    pub fn c(&self) -> Inflation {
        self.c
    }
    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn names(&self) -> &DesignNames {
        &self.names
    }
    pub fn partition(&self) -> &PartitionedSample {
        &self.partition
    }
    pub fn transformed(&self) -> &TransformedResponse {
        &self.transformed
    }
    pub fn continuous_indices(&self) -> &[usize] {
        &self.partition.continuous
    }
    pub fn n_dagger(&self) -> usize {
        self.partition.n_dagger
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.s.ncols(), self.x.ncols(), self.z.ncols())
    }

    /// Same covariates, new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_names(self.c, y, self.s.clone(), self.x.clone(), self.z.clone(), self.names.clone())
    }

    /// Same responses and mean/precision covariates, new discrete design.
    pub fn with_discrete_design(&self, y: Vec<f64>, s: DMatrix<f64>) -> Result<Self> {
        Self::with_names(self.c, y, s, self.x.clone(), self.z.clone(), self.names.clone())
    }

    /// Keep the listed rows (0-based, in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Self::with_names(
            self.c,
            y,
            self.s.select_rows(rows),
            self.x.select_rows(rows),
            self.z.select_rows(rows),
            self.names.clone(),
        )
    }

    /// Design rows restricted to the continuous subsample.
    pub fn continuous_design(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let idx = self.continuous_indices();
        (self.x.select_rows(idx), self.z.select_rows(idx))
    }

    /// Fails with a [`Error::RankDeficient`] naming the first submodel whose
    /// design (the continuous subsample for mean/precision) is not of full column rank.
    pub fn check_rank(&self) -> Result<()> {
        check_full_rank(&self.s, Submodel::Discrete)?;
        let (xc, zc) = self.continuous_design();
        check_full_rank(&xc, Submodel::Mean)?;
        check_full_rank(&zc, Submodel::Precision)
    }
}

pub(crate) fn check_full_rank(m: &DMatrix<f64>, submodel: Submodel) -> Result<()> {
    if m.nrows() < m.ncols() {
        return Err(Error::RankDeficient {
            submodel,
            detail: format!("{} rows for {} columns", m.nrows(), m.ncols()),
        });
    }
    // Scale columns so the rank test is insensitive to units.
    let mut scaled = m.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        let weakest = sv.iter().position(|&v| v == min).unwrap_or(0);
        return Err(Error::RankDeficient {
            submodel,
            detail: format!(
                "condition number {:.3e}; near-collinear columns (singular direction {weakest})",
                if min > 0.0 { max / min } else { f64::INFINITY }
            ),
        });
    }
    Ok(())
}

/// `υ = (κ, β, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub kappa: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParamVector {
    pub fn new(kappa: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self { kappa, beta, gamma }
    }

    pub fn len(&self) -> usize {
        self.kappa.len() + self.beta.len() + self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `θ = (β, γ)` as one vector.
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.beta.len() + self.gamma.len(),
            self.beta.iter().chain(self.gamma.iter()).copied(),
        )
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.kappa.iter().chain(&self.beta).chain(&self.gamma).copied().collect()
    }

    pub fn check_dims(&self, obs: &ObservationSet) -> Result<()> {
        let (p0, p1, p2) = obs.dims();
        if self.kappa.len() != p0 || self.beta.len() != p1 || self.gamma.len() != p2 {
            return Err(Error::Input(format!(
                "parameter dimensions ({}, {}, {}) do not match designs ({p0}, {p1}, {p2})",
                self.kappa.len(),
                self.beta.len(),
                self.gamma.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn partition_and_transforms() {
        let y = vec![0.0, 0.25, 0.0, 0.5, 0.9];
        let obs = ObservationSet::new(Inflation::Zero, y, ones(5), ones(5), ones(5)).unwrap();
        assert_eq!(obs.continuous_indices(), &[1, 3, 4]);
        assert_eq!(obs.n_dagger(), 3);
        assert_eq!(obs.partition().indicator, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        let t = obs.transformed();
        assert_eq!(t.y_star[0], 0.0);
        assert_eq!(t.y_dagger[2], 0.0);
        assert!((t.y_star[1] - (0.25f64 / 0.75).ln()).abs() < 1e-15);
        assert!((t.y_dagger[4] - 0.1f64.ln()).abs() < 1e-14);
        assert_eq!(t.y_star[3], 0.0);
    }

    #[test]
    fn rejects_non_inflated_endpoint() {
        let err = ObservationSet::new(Inflation::Zero, vec![0.0, 1.0, 0.5, 0.2], ones(4), ones(4), ones(4))
            .unwrap_err();
        assert!(err.to_string().contains("clamp"));
        let err = ObservationSet::new(Inflation::One, vec![0.0, 1.0, 0.5, 0.2], ones(4), ones(4), ones(4))
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(ObservationSet::new(Inflation::One, vec![1.0, 1.0, 0.5, 0.2], ones(4), ones(4), ones(4)).is_ok());
    }

    #[test]
    fn rejects_too_many_parameters() {
        assert!(ObservationSet::new(Inflation::Zero, vec![0.0, 0.5, 0.2], ones(3), ones(3), ones(3)).is_err());
    }

    #[test]
    fn rejects_non_finite_design() {
        let mut s = DMatrix::from_element(5, 2, 1.0);
        s[(3, 1)] = f64::NAN;
        let err = ObservationSet::new(Inflation::Zero, vec![0.0, 0.5, 0.2, 0.3, 0.4], s, ones(5), ones(5))
            .unwrap_err();
        assert!(err.to_string().contains("row 4"), "{err}");
    }

    #[test]
    fn rank_check_names_submodel() {
        let n = 8;
        let y = vec![0.0, 0.3, 0.0, 0.5, 0.6, 0.2, 0.0, 0.4];
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 2.0 });
        let obs = ObservationSet::new(Inflation::Zero, y, ones(n), x, ones(n)).unwrap();
        match obs.check_rank() {
            Err(Error::RankDeficient { submodel, .. }) => assert_eq!(submodel, Submodel::Mean),
            other => panic!("{other:?}"),
        }
    }
}

use thiserror::Error;

/// Which linear predictor an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Submodel {
    Discrete,
    Mean,
    Precision,
}

impl std::fmt::Display for Submodel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Submodel::Discrete => "discrete (inflation probability)",
            Submodel::Mean => "mean",
            Submodel::Precision => "precision",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("rank-deficient design for the {submodel} submodel: {detail}")]
    RankDeficient { submodel: Submodel, detail: String },

    #[error("non-finite linear predictor at row {row} of the {submodel} submodel")]
    NonFinitePredictor { submodel: Submodel, row: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("model fit did not converge: {0}")]
    NotConverged(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::Quadrature { .. }
                | Error::Optimizer(_)
                | Error::NotConverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

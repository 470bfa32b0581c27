//! Robust and maximum-likelihood estimation for zero-or-one inflated beta regression.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod link;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod parallel;
pub mod quadrature;
pub mod simulation;
pub mod special;
pub mod tuning;

pub use data::{DesignNames, Inflation, ObservationSet, ParamVector, PartitionedSample, TransformedResponse};
pub use error::{Error, Result, Submodel};
pub use estimate::{fit, AlphaChoice, EstimatorKind, FitOptions, FitResult};
pub use link::{Link, LinkSpec};
pub use parallel::Execution;

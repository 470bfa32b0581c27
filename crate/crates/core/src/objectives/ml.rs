use super::{discrete_value_grad, lsmle_value_grad, EstimatingFunctionValue};
use crate::data::{ObservationSet, ParamVector};
use crate::error::Result;
use crate::link::LinkSpec;
use nalgebra::DVector;

/// Score of the full log-likelihood, `(Σ U(y_i; κ), Σ_{i∈℘} U(y_i; β, γ))`.
pub fn mle_score(obs: &ObservationSet, links: &LinkSpec, ups: &ParamVector) -> Result<EstimatingFunctionValue> {
    ups.check_dims(obs)?;
    let (_, gk) = discrete_value_grad(obs, links, &ups.kappa, 0.0);
    let (_, gt) = lsmle_value_grad(obs, links, ups.theta().as_slice(), 0.0);
    Ok(EstimatingFunctionValue {
        u_kappa: DVector::from_vec(gk),
        u_theta: DVector::from_vec(gt),
    })
}

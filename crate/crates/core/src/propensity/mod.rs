//! Propensity models and the two estimators that fit them to a mask.
//!
//! [`convex_pe`] maximizes the Bernoulli likelihood over a nuclear-norm and
//! max-norm constrained matrix on the square unfolding of the mask.
//! [`nonconvex_pe`] runs gradient descent on a Tucker-parameterized tensor.

mod convex;
mod nonconvex;

use std::sync::Arc;

pub use convex::{convex_pe, convex_pe_on_spec, ConvexPeConfig, ConvexPeReport};
pub use nonconvex::{
    nonconvex_pe, nonconvex_pe_with_backoff, tucker_loglik_gradients, InitStrategy,
    NonconvexPeConfig, NonconvexPeReport, TuckerGradients, UniformInit,
};

use crate::decomposition::TuckerDecomposition;
use crate::error::{Error, Result};
use crate::link::{LinkFunction, Logistic};
use crate::tensor::{DenseTensor, MaskTensor};

/// Parameter tensor `A` of a propensity model.
#[derive(Clone, Debug)]
pub enum Parameter {
    Dense(DenseTensor),
    Tucker(TuckerDecomposition),
}

/// Link function plus parameter tensor; the propensities are `s(A)`.
#[derive(Clone, Debug)]
pub struct PropensityModel {
    link: Arc<dyn LinkFunction>,
    param: Parameter,
}

impl PropensityModel {
    pub fn new(link: Arc<dyn LinkFunction>, param: Parameter) -> Self {
        Self { link, param }
    }

    pub fn logistic(param: DenseTensor) -> Self {
        Self::new(Arc::new(Logistic), Parameter::Dense(param))
    }

    pub fn link(&self) -> &Arc<dyn LinkFunction> {
        &self.link
    }

    pub fn parameter(&self) -> &Parameter {
        &self.param
    }

    /// The parameter tensor, reconstructed if it is held in Tucker form.
    pub fn parameter_tensor(&self) -> DenseTensor {
        match &self.param {
            Parameter::Dense(a) => a.clone(),
            Parameter::Tucker(d) => d.reconstruct(),
        }
    }

    /// `P = s(A)` entrywise.
    pub fn evaluate(&self) -> DenseTensor {
        let link = &self.link;
        self.parameter_tensor().map(|x| link.value(x))
    }
}

/// `-sum [Omega log s(G) + (1 - Omega) log(1 - s(G))]` for a binary mask.
pub fn negative_bernoulli_loglik(
    gamma: &DenseTensor,
    mask: &MaskTensor,
    link: &dyn LinkFunction,
) -> Result<f64> {
    if gamma.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: mask.shape().dims().to_vec(),
            found: gamma.dims().to_vec(),
        });
    }
    Ok(gamma
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&x, &b)| link.loss(x, if b { 1.0 } else { 0.0 }))
        .sum())
}

/// The same loss with real-valued targets in `[0, 1]` in place of the mask.
pub fn negative_bernoulli_loglik_targets(
    gamma: &DenseTensor,
    targets: &DenseTensor,
    link: &dyn LinkFunction,
) -> Result<f64> {
    gamma.check_same_shape(targets)?;
    Ok(loss_sum(gamma.data(), targets.data(), link))
}

pub(crate) fn loss_sum(x: &[f64], y: &[f64], link: &dyn LinkFunction) -> f64 {
    x.iter().zip(y).map(|(&x, &y)| link.loss(x, y)).sum()
}

fn degenerate_mask_warning(mask: &MaskTensor) -> Option<String> {
    if mask.is_all(false) {
        Some(
            "mask has no observed entries; the estimate is pushed to the constraint boundary"
                .into(),
        )
    } else if mask.is_all(true) {
        Some("mask is fully observed; the estimate is pushed to the constraint boundary".into())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn zero_parameters_give_n_log_two() {
        let shape = Shape::new(vec![3, 4, 2]).unwrap();
        let mask = MaskTensor::from_indices(shape.clone(), &[0, 5, 7, 20]).unwrap();
        let f = negative_bernoulli_loglik(&DenseTensor::zeros(shape), &mask, &Logistic).unwrap();
        assert!((f - 24.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_monotonically_for_perfect_fit() {
        let shape = Shape::new(vec![2, 2]).unwrap();
        let mask = MaskTensor::full(shape.clone(), true);
        let mut prev = f64::INFINITY;
        for c in [0.0, 1.0, 5.0, 20.0, 60.0] {
            let f =
                negative_bernoulli_loglik(&DenseTensor::filled(shape.clone(), c), &mask, &Logistic)
                    .unwrap();
            assert!(f < prev);
            prev = f;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn loss_matches_scalar_loop_oracle() {
        let shape = Shape::new(vec![3, 3]).unwrap();
        let g = DenseTensor::from_fn(shape.clone(), |i| i[0] as f64 * 0.8 - i[1] as f64 * 1.1);
        let mask = MaskTensor::from_indices(shape, &[1, 2, 6]).unwrap();
        let mut oracle = 0.0;
        for (k, &x) in g.data().iter().enumerate() {
            let s = 1.0 / (1.0 + (-x).exp());
            oracle -= if mask.is_observed(k) {
                s.ln()
            } else {
                (1.0 - s).ln()
            };
        }
        let f = negative_bernoulli_loglik(&g, &mask, &Logistic).unwrap();
        assert!((f - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn loss_shape_mismatch() {
        let g = DenseTensor::zeros(Shape::new(vec![2, 3]).unwrap());
        let mask = MaskTensor::full(Shape::new(vec![3, 2]).unwrap(), true);
        assert!(negative_bernoulli_loglik(&g, &mask, &Logistic).is_err());
    }
}

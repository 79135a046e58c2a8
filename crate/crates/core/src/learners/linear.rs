//! Ordinary least squares with an intercept.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, least_squares};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    /// Intercept first, then one slope per feature.
    pub coef: Vec<f64>,
}

pub fn fit_ols(train: &Dataset) -> Result<OlsModel> {
    let y = train.require_labels()?;
    Ok(OlsModel { coef: least_squares(&train.design_with_intercept(), y)? })
}

impl FittedModel for OlsModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        if query.p() + 1 != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len() - 1, got: query.p() });
        }
        let mean = query.features().row_iter().map(|r| self.coef[0] + dot(r, &self.coef[1..])).collect();
        Ok(PredictiveDistribution::point(mean))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OlsPredictor;

impl Predictor for OlsPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_ols(train)?))
    }
}

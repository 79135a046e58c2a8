//! Bayes-optimal classifiers of the label-noise designs, `1{η(x) > 1/2}`.

use alloc::vec::Vec;

use super::{Classifier, FittedModel, PredictiveDistribution};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::synthgen::NoiseModel;

const DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BayesClassifier(pub NoiseModel);

impl BayesClassifier {
    fn check(&self, query: &Dataset) -> Result<()> {
        if query.p() != DIM {
            return Err(Error::DimensionMismatch { expected: DIM, got: query.p() });
        }
        Ok(())
    }

    fn decide(&self, x: &[f64]) -> bool {
        match self.0 {
            // η > 1/2 exactly when the log-odds discriminant is positive
            NoiseModel::M1 => NoiseModel::m1_discriminant(x) > 0.0,
            NoiseModel::M2 => self.0.eta(x) > 0.5,
        }
    }
}

impl Classifier for BayesClassifier {
    fn classify(&self, query: &Dataset) -> Result<Vec<f64>> {
        self.check(query)?;
        Ok(query.features().row_iter().map(|x| if self.decide(x) { 1.0 } else { 0.0 }).collect())
    }
}

impl FittedModel for BayesClassifier {
    /// The true `η`.
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        self.check(query)?;
        Ok(PredictiveDistribution::point(query.features().row_iter().map(|x| self.0.eta(x)).collect()))
    }
}

pub fn bayes_classify(model: NoiseModel, query: &Dataset) -> Result<Vec<f64>> {
    BayesClassifier(model).classify(query)
}

//! M-estimation for the linear, logistic and quantile working models, the
//! semi-supervised imputation/debiasing estimators, and Monte-Carlo truth.

mod erm;
mod semisup;
mod truth;

pub use erm::{erm, erm_design, gradient, objective, LOGISTIC_TOL, QUANTILE_SMOOTHING, SEPARATION_NORM};
pub use semisup::{semisup_components, semisup_estimate, SemiSupComponents, SemiSupStrategy};
pub use truth::{mc_truth, McTruth, MC_QUANTILE_CAP};

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{FittedModel, PredictiveDistribution, Predictor};
use crate::linalg::dot;

/// Loss defining the estimand; parameters are `θ = (intercept, slopes…)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkingModel {
    /// `½(y − x̄ᵀθ)²`.
    LinearReg,
    /// `log(1 + exp(x̄ᵀθ)) − y·x̄ᵀθ`.
    LogisticReg,
    /// Check loss `(τ − 1{u < 0})·u` with `u = y − x̄ᵀθ`.
    QuantileReg(f64),
}

/// How a [`ThetaEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Erm,
    Vanilla,
    ImputeI,
    DebiasD,
    PPIOriginal,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Vanilla => "vanilla",
            Method::ImputeI => "impute_i",
            Method::DebiasD => "debias_d",
            Method::PPIOriginal => "ppi_original",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    /// Intercept first.
    pub theta: Vec<f64>,
    /// Mean loss at `theta`.
    pub objective: f64,
    /// Sup-norm of the mean gradient at `theta`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub method: Method,
}

/// Logistic-regression classifier backed by [`erm`]; predicts `P(Y = 1 | x)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogisticPredictor;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub theta: Vec<f64>,
}

impl LogisticModel {
    pub fn probability(&self, x: &[f64]) -> f64 {
        crate::synthgen::logistic(self.theta[0] + dot(&self.theta[1..], x))
    }
}

impl FittedModel for LogisticModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        if query.p() + 1 != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len() - 1, got: query.p() });
        }
        Ok(PredictiveDistribution::point(query.features().row_iter().map(|x| self.probability(x)).collect()))
    }
}

impl Predictor for LogisticPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(LogisticModel { theta: erm(WorkingModel::LogisticReg, train)?.theta }))
    }
}

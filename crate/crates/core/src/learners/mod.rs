//! Base predictors and classifiers behind a common fit/predict interface.
//!
//! A [`Predictor`] is an unfitted recipe; fitting it on a labeled
//! [`Dataset`] yields an immutable [`FittedModel`] whose `predict` returns a
//! [`PredictiveDistribution`] per query row. Classification models report the
//! class-1 probability as their mean.

pub mod bayes;
pub mod gbrt;
pub mod gpr;
pub mod kernel;
pub mod knn;
pub mod krr;
pub mod lasso;
pub mod lda;
pub mod linear;
pub mod poly;
mod optim;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Probability levels of the quantile grid carried by every predictive distribution.
pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];
/// Standard normal quantiles at [`QUANTILE_LEVELS`].
pub const NORMAL_QUANTILES: [f64; 5] = [-1.959_963_984_540_054, -0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7, 1.959_963_984_540_054];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// One row per query at the levels of [`QUANTILE_LEVELS`].
    pub quantiles: Vec<[f64; 5]>,
}

impl PredictiveDistribution {
    /// Validating constructor.
    pub fn new(mean: Vec<f64>, sd: Vec<f64>, quantiles: Vec<[f64; 5]>) -> Result<Self> {
        let n = mean.len();
        if sd.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sd.len() });
        }
        if quantiles.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: quantiles.len() });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Predictor("non-finite predictive mean".into()));
        }
        if sd.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Predictor("predictive sd must be finite and >= 0".into()));
        }
        for (i, q) in quantiles.iter().enumerate() {
            if q.iter().any(|v| !v.is_finite()) || q.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Predictor(format!("quantile row {i} is not nondecreasing")));
            }
        }
        Ok(PredictiveDistribution { mean, sd, quantiles })
    }

    /// Point predictions: zero spread, every quantile equal to the mean.
    pub fn point(mean: Vec<f64>) -> Self {
        let n = mean.len();
        let quantiles = mean.iter().map(|&m| [m; 5]).collect();
        PredictiveDistribution { mean, sd: alloc::vec![0.0; n], quantiles }
    }

    /// Gaussian predictive laws `N(mean, sd²)`.
    pub fn gaussian(mean: Vec<f64>, sd: Vec<f64>) -> Self {
        let quantiles = mean
            .iter()
            .zip(&sd)
            .map(|(&m, &s)| core::array::from_fn(|k| m + NORMAL_QUANTILES[k] * s))
            .collect();
        PredictiveDistribution { mean, sd, quantiles }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Unfitted model recipe.
pub trait Predictor: Send + Sync {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>>;
}

/// A fitted, immutable model.
pub trait FittedModel: Send + Sync {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution>;

    fn predict_mean(&self, query: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict(query)?.mean)
    }
}

/// Regressors that accept per-sample weights in their loss.
pub trait WeightedRegressor: Send + Sync {
    fn fit_weighted(&self, train: &Dataset, weights: &[f64]) -> Result<Box<dyn FittedModel>>;
}

/// Hard 0/1 classifiers.
pub trait Classifier {
    fn classify(&self, query: &Dataset) -> Result<Vec<f64>>;
}

/// Wraps a known function as a fitted point predictor.
pub struct FunctionModel<F>(pub F);

impl<F> FittedModel for FunctionModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::point(query.features().row_iter().map(&self.0).collect()))
    }
}

/// A "predictor" that ignores its training data and returns a fixed function.
pub struct FunctionPredictor<F>(pub F);

impl<F> Predictor for FunctionPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Clone + Send + Sync + 'static,
{
    fn fit(&self, _train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(FunctionModel(self.0.clone())))
    }
}

/// Predicts the (weighted) training mean everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanPredictor;

impl Predictor for MeanPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        let y = train.require_labels()?;
        let m = y.iter().sum::<f64>() / y.len() as f64;
        Ok(Box::new(FunctionModel(move |_: &[f64]| m)))
    }
}

impl WeightedRegressor for MeanPredictor {
    fn fit_weighted(&self, train: &Dataset, weights: &[f64]) -> Result<Box<dyn FittedModel>> {
        let y = train.require_labels()?;
        check_weights(weights, y.len())?;
        let w: f64 = weights.iter().sum();
        let m = y.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() / w;
        Ok(Box::new(FunctionModel(move |_: &[f64]| m)))
    }
}

/// Classifies by thresholding a model's class-1 probability at one half.
pub struct ThresholdClassifier(pub Box<dyn FittedModel>);

impl Classifier for ThresholdClassifier {
    fn classify(&self, query: &Dataset) -> Result<Vec<f64>> {
        Ok(self.0.predict_mean(query)?.into_iter().map(|p| if p >= 0.5 { 1.0 } else { 0.0 }).collect())
    }
}

pub(crate) fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("sample weights must be positive and finite".into()));
    }
    Ok(())
}

/// Binary labels as booleans, rejecting anything other than 0/1.
pub(crate) fn binary_labels(y: &[f64]) -> Result<Vec<bool>> {
    y.iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::InvalidData(format!("label {v} is not 0/1")))
            }
        })
        .collect()
}

/// Fold id (`0..folds`) per row from a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::rng_from_seed(seed));
    let mut fold = alloc::vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Training and validation row indices for fold `k`.
pub(crate) fn fold_split(assignment: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, &f) in assignment.iter().enumerate() {
        if f == k {
            valid.push(i);
        } else {
            train.push(i);
        }
    }
    (train, valid)
}

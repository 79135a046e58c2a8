//! Fit-predict wire protocol shared with the model server.
//!
//! `POST /v1/fit_predict` takes a [`FitPredictRequest`] and answers with a
//! [`FitPredictResponse`] or, on 4xx/5xx, an [`ErrorBody`]. `GET /v1/health`
//! answers with [`Health`].

use serde::{Deserialize, Serialize};
use statbench_core::learners::{PredictiveDistribution, QUANTILE_LEVELS};
use statbench_core::linalg::Matrix;
use statbench_core::Dataset;

pub const FIT_PREDICT_PATH: &str = "/v1/fit_predict";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDataset {
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

impl WireDataset {
    pub fn from_dataset(data: &Dataset, with_labels: bool) -> Self {
        WireDataset {
            x: (0..data.n()).map(|i| data.row(i).to_vec()).collect(),
            y: if with_labels { data.labels().map(<[f64]>::to_vec) } else { None },
        }
    }

    pub fn to_dataset(&self) -> statbench_core::Result<Dataset> {
        let p = self.x.first().map_or(0, Vec::len);
        if self.x.iter().any(|r| r.len() != p) {
            return Err(statbench_core::Error::InvalidData("ragged feature rows".into()));
        }
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        Dataset::new(Matrix::from_vec(self.x.len(), p, flat)?, self.y.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPredictRequest {
    pub task: Task,
    pub train: WireDataset,
    pub query: WireDataset,
    pub quantiles: Vec<f64>,
}

impl FitPredictRequest {
    pub fn new(task: Task, train: &Dataset, query: &Dataset) -> statbench_core::Result<Self> {
        train.require_labels()?;
        if train.p() != query.p() {
            return Err(statbench_core::Error::DimensionMismatch { expected: train.p(), got: query.p() });
        }
        Ok(FitPredictRequest {
            task,
            train: WireDataset::from_dataset(train, true),
            query: WireDataset::from_dataset(query, false),
            quantiles: QUANTILE_LEVELS.to_vec(),
        })
    }

    /// Server-side checks: labeled train, matching widths, the fixed quantile grid.
    pub fn validate(&self) -> Result<(Dataset, Dataset), String> {
        let train = self.train.to_dataset().map_err(|e| format!("train: {e}"))?;
        if train.labels().is_none() {
            return Err("train: missing y".into());
        }
        let query = WireDataset { x: self.query.x.clone(), y: None }.to_dataset().map_err(|e| format!("query: {e}"))?;
        if query.p() != train.p() {
            return Err(format!("query has {} features, train has {}", query.p(), train.p()));
        }
        if self.quantiles != QUANTILE_LEVELS {
            return Err(format!("quantiles must be {QUANTILE_LEVELS:?}"));
        }
        Ok((train, query))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPredictResponse {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub quantiles: Vec<Vec<f64>>,
}

impl FitPredictResponse {
    pub fn from_distribution(d: &PredictiveDistribution) -> Self {
        FitPredictResponse { mean: d.mean.clone(), sd: d.sd.clone(), quantiles: d.quantiles.iter().map(|q| q.to_vec()).collect() }
    }

    /// Check shape against `n_query` and the distribution invariants.
    pub fn into_distribution(self, n_query: usize) -> Result<PredictiveDistribution, String> {
        if self.mean.len() != n_query {
            return Err(format!("{} means for {} query rows", self.mean.len(), n_query));
        }
        let mut rows = Vec::with_capacity(self.quantiles.len());
        for (i, q) in self.quantiles.into_iter().enumerate() {
            let row: [f64; 5] = q.try_into().map_err(|q: Vec<f64>| format!("quantile row {i} has {} entries", q.len()))?;
            rows.push(row);
        }
        PredictiveDistribution::new(self.mean, self.sd, rows).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
}

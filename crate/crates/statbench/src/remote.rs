//! HTTP client for a remote fit-predict service.
//!
//! One request per call and no retries. Each failure mode has its own
//! [`RemoteError`] variant.

use std::sync::Arc;
use std::time::Duration;

use statbench_core::learners::{FittedModel, PredictiveDistribution, Predictor};
use statbench_core::Dataset;

use crate::protocol::{ErrorBody, FitPredictRequest, FitPredictResponse, Health, Task, FIT_PREDICT_PATH, HEALTH_PATH};

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
/// Environment variable naming the default endpoint.
pub const ENDPOINT_ENV: &str = "WORKBENCH_REMOTE_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("invalid request: {0}")]
    Request(String),
}

impl From<RemoteError> for statbench_core::Error {
    fn from(e: RemoteError) -> Self {
        statbench_core::Error::Predictor(format!("remote: {e}"))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    endpoint: String,
    timeout_ms: u64,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient { endpoint: endpoint.trim_end_matches('/').to_string(), timeout_ms, agent }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn map_err(&self, e: ureq::Error) -> RemoteError {
        match e {
            ureq::Error::Timeout(_) => RemoteError::Timeout(self.timeout_ms),
            ureq::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
                RemoteError::Timeout(self.timeout_ms)
            }
            ureq::Error::Json(j) => RemoteError::Malformed(j.to_string()),
            other => RemoteError::Transport(other.to_string()),
        }
    }

    fn read(&self, mut resp: ureq::http::Response<ureq::Body>) -> Result<(u16, String), RemoteError> {
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| self.map_err(e))?;
        if status >= 400 {
            let message = serde_json::from_str::<ErrorBody>(&body).map(|b| b.error).unwrap_or(body);
            return Err(RemoteError::Server { status, message });
        }
        if status != 200 {
            return Err(RemoteError::Malformed(format!("unexpected status {status}")));
        }
        Ok((status, body))
    }

    pub fn health(&self) -> Result<Health, RemoteError> {
        let resp = self.agent.get(format!("{}{HEALTH_PATH}", self.endpoint)).call().map_err(|e| self.map_err(e))?;
        let (_, body) = self.read(resp)?;
        let h: Health = serde_json::from_str(&body).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        if h.status != "ok" {
            return Err(RemoteError::Malformed(format!("health status `{}`", h.status)));
        }
        Ok(h)
    }

    pub fn fit_predict(&self, task: Task, train: &Dataset, query: &Dataset) -> Result<PredictiveDistribution, RemoteError> {
        let req = FitPredictRequest::new(task, train, query).map_err(|e| RemoteError::Request(e.to_string()))?;
        let resp = self
            .agent
            .post(format!("{}{FIT_PREDICT_PATH}", self.endpoint))
            .send_json(&req)
            .map_err(|e| self.map_err(e))?;
        let (_, body) = self.read(resp)?;
        let parsed: FitPredictResponse = serde_json::from_str(&body).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        parsed.into_distribution(query.n()).map_err(RemoteError::Malformed)
    }
}

pub fn remote_predict(
    endpoint: &str,
    train: &Dataset,
    query: &Dataset,
    task: Task,
    timeout_ms: u64,
) -> Result<PredictiveDistribution, RemoteError> {
    RemoteClient::new(endpoint, timeout_ms).fit_predict(task, train, query)
}

/// A [`Predictor`] backed by the remote service. Fitting only stores the
/// training set; each prediction is one round trip.
#[derive(Debug, Clone)]
pub struct RemotePredictor {
    pub client: RemoteClient,
    pub task: Task,
}

impl RemotePredictor {
    pub fn new(endpoint: &str, timeout_ms: u64, task: Task) -> Self {
        RemotePredictor { client: RemoteClient::new(endpoint, timeout_ms), task }
    }
}

struct RemoteModel {
    client: RemoteClient,
    task: Task,
    train: Arc<Dataset>,
}

impl FittedModel for RemoteModel {
    fn predict(&self, query: &Dataset) -> statbench_core::Result<PredictiveDistribution> {
        Ok(self.client.fit_predict(self.task, &self.train, query)?)
    }
}

impl Predictor for RemotePredictor {
    fn fit(&self, train: &Dataset) -> statbench_core::Result<Box<dyn FittedModel>> {
        train.require_labels()?;
        Ok(Box::new(RemoteModel { client: self.client.clone(), task: self.task, train: Arc::new(train.clone()) }))
    }
}

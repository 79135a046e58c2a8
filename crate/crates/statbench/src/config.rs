//! Experiment configuration files.
//!
//! A config is one JSON document. Overrides are `dotted.path=value` pairs
//! applied to the document before it is typed, so they can reach any field,
//! including list entries (`estimators.0.base=ols`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::remote::{DEFAULT_TIMEOUT_MS, ENDPOINT_ENV};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Syntax(serde_json::Error),
    #[error("config schema: {0}")]
    Schema(serde_json::Error),
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("unknown config `{0}`")]
    UnknownName(String),
}

pub fn invalid_field(field: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub replicates: usize,
    pub dgp: DgpSpec,
    pub estimators: Vec<EstimatorSpec>,
    pub metrics: Vec<String>,
    /// Estimator label that `relative_mse` divides by; defaults to the first estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub remote: RemoteSpec,
    /// Default output directory; `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Free-form notes, such as the full-size settings. Not hashed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSpec {
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl Default for RemoteSpec {
    fn default() -> Self {
        RemoteSpec { endpoint: None, timeout_ms: DEFAULT_TIMEOUT_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DgpSpec {
    Semisup {
        setting: String,
        p: usize,
        n: usize,
        m: usize,
        /// Quantile level; required for the quantile setting.
        #[serde(default)]
        tau: Option<f64>,
        /// Monte-Carlo draws for the population truth.
        n_mc: usize,
    },
    Cate {
        setup: String,
        n: usize,
        sigma2: f64,
        n_test: usize,
    },
    Covshift {
        mean_fn: String,
        n: usize,
        m: usize,
        n_aux: usize,
    },
    Noise {
        model: String,
        n: usize,
        rho: f64,
        n_test: usize,
    },
    SparseLinear {
        p: usize,
        s: usize,
        beta_type: String,
        cov_type: String,
        snr: f64,
        n: usize,
        n_test: usize,
    },
    Probe {
        kind: String,
        n: usize,
    },
}

impl DgpSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DgpSpec::Semisup { .. } => "semisup",
            DgpSpec::Cate { .. } => "cate",
            DgpSpec::Covshift { .. } => "covshift",
            DgpSpec::Noise { .. } => "noise",
            DgpSpec::SparseLinear { .. } => "sparse-linear",
            DgpSpec::Probe { .. } => "probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Procedure name; its meaning depends on the DGP family.
    pub name: String,
    /// Base predictor (imputer, outcome model, or the model itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    /// Propensity model for the X, R and DR learners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity: Option<String>,
    /// `clean` or `noisy` training labels for the label-noise family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<String>,
    /// Record label; derived from the other fields when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EstimatorSpec {
    pub fn named(name: &str) -> Self {
        EstimatorSpec { name: name.into(), base: None, propensity: None, train: None, label: None }
    }

    pub fn with_base(mut self, base: &str) -> Self {
        self.base = Some(base.into());
        self
    }

    pub fn with_propensity(mut self, p: &str) -> Self {
        self.propensity = Some(p.into());
        self
    }

    pub fn with_train(mut self, t: &str) -> Self {
        self.train = Some(t.into());
        self
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = match (&self.name[..], &self.base) {
            ("model", Some(b)) => b.clone(),
            (n, Some(b)) => format!("{n}-{b}"),
            (n, None) => n.to_string(),
        };
        if let Some(t) = &self.train {
            s = format!("{s}-{t}");
        }
        s
    }

    /// Every predictor name this estimator refers to.
    pub fn predictors(&self) -> impl Iterator<Item = &str> {
        self.base.iter().chain(&self.propensity).map(String::as_str)
    }
}

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        serde_json::from_value(v).map_err(ConfigError::Schema)
    }

    /// Parse `text`, apply overrides, and fill the remote endpoint from the environment.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut v: Value = serde_json::from_str(text).map_err(ConfigError::Syntax)?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let mut cfg = Self::from_value(v)?;
        cfg.resolve_endpoint(std::env::var(ENDPOINT_ENV).ok());
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text, overrides)
    }

    pub fn resolve_endpoint(&mut self, env: Option<String>) {
        if self.remote.endpoint.is_none() {
            self.remote.endpoint = env.filter(|s| !s.trim().is_empty());
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the typed config with `output` and `comment` removed, so
    /// formatting, key order and explicit defaults do not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.comment = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.estimators.iter().map(EstimatorSpec::display_label).collect()
    }
}

/// Apply one `a.b.c=value` override. The value is read as JSON when it
/// parses, otherwise as a string. Missing object keys are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let err = |m: &str| ConfigError::Override(assignment.to_string(), m.to_string());
    let (path, raw) = assignment.split_once('=').ok_or_else(|| err("expected key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(err("empty key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut at = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        at = match at {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let i: usize = key.parse().map_err(|_| err(&format!("`{key}` is not a list index")))?;
                let len = items.len();
                let slot = items.get_mut(i).ok_or_else(|| err(&format!("index {i} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(err(&format!("`{key}` descends into a scalar"))),
        };
    }
    unreachable!("the loop returns on the last key")
}

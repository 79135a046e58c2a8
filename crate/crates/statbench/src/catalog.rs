//! Canned desk-scale configs, one per experiment of the study.

use crate::config::{ConfigError, ExperimentConfig};

pub const CATALOG: [(&str, &str); 19] = [
    ("semisup-linear", include_str!("../configs/semisup-linear.json")),
    ("semisup-logistic", include_str!("../configs/semisup-logistic.json")),
    ("semisup-quantile", include_str!("../configs/semisup-quantile.json")),
    ("cate-A", include_str!("../configs/cate-A.json")),
    ("cate-B", include_str!("../configs/cate-B.json")),
    ("cate-C", include_str!("../configs/cate-C.json")),
    ("cate-D", include_str!("../configs/cate-D.json")),
    ("cate-E", include_str!("../configs/cate-E.json")),
    ("cate-F", include_str!("../configs/cate-F.json")),
    ("covshift-i", include_str!("../configs/covshift-i.json")),
    ("covshift-ii", include_str!("../configs/covshift-ii.json")),
    ("covshift-iii", include_str!("../configs/covshift-iii.json")),
    ("covshift-iv", include_str!("../configs/covshift-iv.json")),
    ("covshift-v", include_str!("../configs/covshift-v.json")),
    ("noise-M1", include_str!("../configs/noise-M1.json")),
    ("noise-M2", include_str!("../configs/noise-M2.json")),
    ("sparse-lasso", include_str!("../configs/sparse-lasso.json")),
    ("probe-1d", include_str!("../configs/probe-1d.json")),
    ("probe-2d", include_str!("../configs/probe-2d.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    CATALOG.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let t = text(name).ok_or_else(|| ConfigError::UnknownName(name.to_string()))?;
    ExperimentConfig::parse(t, overrides)
}

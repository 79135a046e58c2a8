//! Replicated runs and their output files.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statbench_core::evalsuite::{aggregate, bias_variance_from_records, AggregateRow, Metric, MetricsRecord};

use crate::experiments::{Prepared, RunError};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub errors: Vec<RunError>,
    pub aggregate: Vec<AggregateRow>,
    pub notes: Vec<String>,
}

/// Run every replicate on at most `jobs` worker threads. Records come back
/// in replicate order, then estimator order, whatever the thread count.
pub fn run_replicated(prepared: &Prepared, jobs: usize) -> Result<RunResult, String> {
    let reps = prepared.plan.config.replicates;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| e.to_string())?;
    let outputs: Vec<_> = pool.install(|| (0..reps).into_par_iter().map(|r| prepared.replicate(r)).collect());
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for o in outputs {
        records.extend(o.records);
        errors.extend(o.errors);
    }
    let aggregate = summarize(prepared, &records);
    Ok(RunResult { records, errors, aggregate, notes: prepared.notes.clone() })
}

/// Per-metric summaries plus run-level bias² and variance rows (one value
/// each, so median = mean and se = 0).
pub fn summarize(prepared: &Prepared, records: &[MetricsRecord]) -> Vec<AggregateRow> {
    let mut rows = aggregate(records);
    let wants = |m: Metric| prepared.plan.config.metrics.iter().any(|s| *s == m.label());
    if let (true, Some(target)) = (wants(Metric::Bias2) || wants(Metric::Variance), prepared.theta_target()) {
        for (experiment, estimator, bv) in bias_variance_from_records(records, &target) {
            let count = records
                .iter()
                .filter(|r| r.estimator == estimator && r.metric == Metric::Theta(0))
                .count();
            for (m, v) in [(Metric::Bias2, bv.bias2), (Metric::Variance, bv.variance)] {
                if wants(m) {
                    rows.push(AggregateRow { experiment: experiment.clone(), estimator: estimator.clone(), metric: m, count, mean: v, median: v, se: 0.0 });
                }
            }
        }
        rows.sort_by(|a, b| (&a.experiment, &a.estimator, a.metric).cmp(&(&b.experiment, &b.estimator, b.metric)));
    }
    rows
}

pub const RECORD_COLUMNS: [&str; 5] = ["experiment", "replicate", "estimator", "metric", "value"];
pub const AGGREGATE_COLUMNS: [&str; 7] = ["experiment", "estimator", "metric", "count", "mean", "median", "se"];

pub fn write_records<W: Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([r.experiment.clone(), r.replicate.to_string(), r.estimator.clone(), r.metric.label(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<MetricsRecord>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if header != RECORD_COLUMNS {
        return Err(format!("unexpected header {header:?}"));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(MetricsRecord {
                experiment: rec[0].to_string(),
                replicate: rec[1].parse().map_err(|e| format!("replicate: {e}"))?,
                estimator: rec[2].to_string(),
                metric: rec[3].parse().map_err(|e: statbench_core::Error| e.to_string())?,
                value: rec[4].parse().map_err(|e| format!("value: {e}"))?,
            })
        })
        .collect()
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    for a in rows {
        w.write_record([
            a.experiment.clone(),
            a.estimator.clone(),
            a.metric.label(),
            a.count.to_string(),
            a.mean.to_string(),
            a.median.to_string(),
            a.se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub name: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub replicates: usize,
    pub family: &'a str,
    pub estimators: Vec<String>,
    pub metrics: &'a [String],
    pub versions: Versions,
    pub record_count: usize,
    pub notes: &'a [String],
    pub errors: &'a [RunError],
    pub config: &'a crate::config::ExperimentConfig,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub statbench: &'static str,
    pub statbench_core: &'static str,
}


pub fn write_outputs(prepared: &Prepared, result: &RunResult, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
    write_records(&result.records, fs::File::create(dir.join("records.csv"))?).map_err(csv_err)?;
    write_aggregate(&result.aggregate, fs::File::create(dir.join("aggregate.csv"))?).map_err(csv_err)?;
    let cfg = &prepared.plan.config;
    let manifest = Manifest {
        name: &cfg.name,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        replicates: cfg.replicates,
        family: cfg.dgp.family(),
        estimators: cfg.labels(),
        metrics: &cfg.metrics,
        versions: Versions { statbench: env!("CARGO_PKG_VERSION"), statbench_core: statbench_core::VERSION },
        record_count: result.records.len(),
        notes: &result.notes,
        errors: &result.errors,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| std::io::Error::other(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")
}

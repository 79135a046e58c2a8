//! Metrics: accumulated local effects, linear surrogates, bias/variance of
//! replicated estimates, excess classification risk, and record aggregation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::bayes::bayes_classify;
use crate::learners::{Classifier, FittedModel};
use crate::linalg::{least_squares, Matrix};
use crate::mestim::ThetaEstimate;
use crate::synthgen::NoisyLabelBundle;

pub const DEFAULT_ALE_BINS: usize = 40;

/// Accumulated local effects of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct AleCurve {
    pub feature: usize,
    /// Strictly increasing bin edges `z₀ < … < z_K`.
    pub edges: Vec<f64>,
    /// Centered accumulated effect at each edge.
    pub edge_values: Vec<f64>,
    /// Centered effect per bin, the average of its two edge values.
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl AleCurve {
    pub fn bins(&self) -> usize {
        self.values.len()
    }

    /// Count-weighted mean of the per-bin values; zero up to rounding.
    pub fn centering_error(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.values.iter().zip(&self.counts).map(|(v, &c)| v * c as f64).sum::<f64>() / n as f64
    }
}

/// Quantile edges taken at observed values, so every bin holds at least one point.
fn ale_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges = vec![sorted[0]];
    for k in 1..=bins {
        let idx = (k * n).div_ceil(bins) - 1;
        let z = sorted[idx];
        if z > *edges.last().expect("nonempty") {
            edges.push(z);
        }
    }
    edges
}

/// ALE of `model` along feature `j` on `data` with up to `bins` quantile
/// bins. Point `i` falls in bin `k` when `z_{k−1} < x_ij ≤ z_k` (the first
/// bin also holds `z₀`); its local effect is `f(x with x_j = z_k) − f(x with x_j = z_{k−1})`.
pub fn ale(model: &dyn FittedModel, data: &Dataset, j: usize, bins: usize) -> Result<AleCurve> {
    if bins < 2 {
        return Err(invalid("ALE needs at least two bins"));
    }
    if j >= data.p() {
        return Err(invalid(format!("feature {j} out of range for p = {}", data.p())));
    }
    let x = data.features();
    let col = x.col(j);
    let mut sorted = col.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::InvalidData(format!("feature {j} is constant")));
    }
    let edges = ale_edges(&sorted, bins);
    let k = edges.len() - 1;
    let bin_of = |v: f64| -> usize { edges[1..].partition_point(|&z| z < v).min(k - 1) };
    let assign: Vec<usize> = col.iter().map(|&v| bin_of(v)).collect();
    let mut lower = x.clone();
    let mut upper = x.clone();
    for (i, &b) in assign.iter().enumerate() {
        lower[(i, j)] = edges[b];
        upper[(i, j)] = edges[b + 1];
    }
    let f_lo = model.predict_mean(&Dataset::unlabeled(lower)?)?;
    let f_hi = model.predict_mean(&Dataset::unlabeled(upper)?)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (i, &b) in assign.iter().enumerate() {
        sums[b] += f_hi[i] - f_lo[i];
        counts[b] += 1;
    }
    let mut acc = vec![0.0; k + 1];
    for b in 0..k {
        acc[b + 1] = acc[b] + sums[b] / counts[b] as f64;
    }
    let raw: Vec<f64> = (0..k).map(|b| 0.5 * (acc[b] + acc[b + 1])).collect();
    let n = data.n() as f64;
    let center = raw.iter().zip(&counts).map(|(v, &c)| v * c as f64).sum::<f64>() / n;
    Ok(AleCurve {
        feature: j,
        edges,
        edge_values: acc.iter().map(|v| v - center).collect(),
        values: raw.iter().map(|v| v - center).collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub r2: f64,
    /// Intercept first, then one coefficient per relevant feature in the given order.
    pub coef: Vec<f64>,
}

/// OLS of the model's predictions on the `relevant` columns plus an intercept.
/// `r2` is 1 when the predictions are constant and fitted exactly.
pub fn linear_surrogate(model: &dyn FittedModel, test: &Dataset, relevant: &[usize]) -> Result<Surrogate> {
    if relevant.is_empty() {
        return Err(invalid("the surrogate needs at least one relevant feature"));
    }
    if let Some(&bad) = relevant.iter().find(|&&j| j >= test.p()) {
        return Err(invalid(format!("feature {bad} out of range for p = {}", test.p())));
    }
    if test.n() <= relevant.len() + 1 {
        return Err(invalid("the surrogate needs more rows than relevant features plus one"));
    }
    let pred = model.predict_mean(&test.without_labels())?;
    let x = test.features();
    let design = Matrix::from_fn(test.n(), relevant.len() + 1, |i, c| if c == 0 { 1.0 } else { x[(i, relevant[c - 1])] });
    let coef = least_squares(&design, &pred)?;
    let fitted = design.matvec(&coef);
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    let sst: f64 = pred.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sse: f64 = pred.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(Surrogate { r2, coef })
}

impl AsRef<[f64]> for ThetaEstimate {
    fn as_ref(&self) -> &[f64] {
        &self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVariance {
    pub bias2: f64,
    pub variance: f64,
}

impl BiasVariance {
    pub fn mse(&self) -> f64 {
        self.bias2 + self.variance
    }
}

fn check_replicates<T: AsRef<[f64]>>(estimates: &[T], theta_star: &[f64]) -> Result<()> {
    if estimates.len() < 2 {
        return Err(invalid("bias/variance needs at least two replicates"));
    }
    for e in estimates {
        if e.as_ref().len() != theta_star.len() {
            return Err(Error::DimensionMismatch { expected: theta_star.len(), got: e.as_ref().len() });
        }
    }
    Ok(())
}

/// Per-component squared bias and variance (divisor R) of replicated estimates.
pub fn bias_variance_components<T: AsRef<[f64]>>(estimates: &[T], theta_star: &[f64]) -> Result<Vec<BiasVariance>> {
    check_replicates(estimates, theta_star)?;
    let r = estimates.len() as f64;
    Ok((0..theta_star.len())
        .map(|j| {
            let mean = estimates.iter().map(|e| e.as_ref()[j]).sum::<f64>() / r;
            let variance = estimates.iter().map(|e| (e.as_ref()[j] - mean).powi(2)).sum::<f64>() / r;
            BiasVariance { bias2: (mean - theta_star[j]).powi(2), variance }
        })
        .collect())
}

/// `bias2 = ‖mean θ̂ − θ*‖²`, `variance = mean ‖θ̂ − mean θ̂‖²`; the two sum
/// to the mean squared error `mean ‖θ̂ − θ*‖²`.
pub fn bias_variance<T: AsRef<[f64]>>(estimates: &[T], theta_star: &[f64]) -> Result<BiasVariance> {
    let parts = bias_variance_components(estimates, theta_star)?;
    Ok(BiasVariance { bias2: parts.iter().map(|b| b.bias2).sum(), variance: parts.iter().map(|b| b.variance).sum() })
}

/// Mean of the true conditional risk `η·1{C=0} + (1−η)·1{C=1}` over the rows.
pub fn conditional_risk(decisions: &[f64], eta: &[f64]) -> f64 {
    let n = decisions.len() as f64;
    decisions.iter().zip(eta).map(|(&c, &e)| if c >= 0.5 { 1.0 - e } else { e }).sum::<f64>() / n
}

/// Plain 0/1 error against labels.
pub fn test_error(decisions: &[f64], labels: &[f64]) -> f64 {
    let n = decisions.len() as f64;
    decisions.iter().zip(labels).filter(|(c, y)| (**c >= 0.5) != (**y >= 0.5)).count() as f64 / n
}

/// `R(C) − R(Bayes)` on the clean test set, both risks from the true `η`.
pub fn excess_risk(classifier: &dyn Classifier, bundle: &NoisyLabelBundle) -> Result<f64> {
    let query = bundle.test.without_labels();
    let eta: Vec<f64> = query.features().row_iter().map(|x| bundle.eta(x)).collect();
    let ours = classifier.classify(&query)?;
    if ours.len() != eta.len() {
        return Err(Error::DimensionMismatch { expected: eta.len(), got: ours.len() });
    }
    let bayes = bayes_classify(bundle.model, &query)?;
    Ok(conditional_risk(&ours, &eta) - conditional_risk(&bayes, &eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    TestMse,
    RelativeMse,
    Bias2,
    Variance,
    ExcessRisk,
    R2Surrogate,
    TestError,
    /// Test MSE restricted to the training box, and outside it.
    InterpMse,
    ExtrapMse,
    /// `‖θ̂ − θ*‖²` of one replicate.
    SquaredError,
    /// One component of a replicate's estimate (intercept is 0).
    Theta(usize),
}

impl Metric {
    pub fn label(&self) -> String {
        match self {
            Metric::TestMse => "test_mse".into(),
            Metric::RelativeMse => "relative_mse".into(),
            Metric::Bias2 => "bias2".into(),
            Metric::Variance => "variance".into(),
            Metric::ExcessRisk => "excess_risk".into(),
            Metric::R2Surrogate => "r2_surrogate".into(),
            Metric::TestError => "test_error".into(),
            Metric::InterpMse => "interp_mse".into(),
            Metric::ExtrapMse => "extrap_mse".into(),
            Metric::SquaredError => "sq_error".into(),
            Metric::Theta(j) => format!("theta_{j}"),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "test_mse" => Metric::TestMse,
            "relative_mse" => Metric::RelativeMse,
            "bias2" => Metric::Bias2,
            "variance" => Metric::Variance,
            "excess_risk" => Metric::ExcessRisk,
            "r2_surrogate" => Metric::R2Surrogate,
            "test_error" => Metric::TestError,
            "interp_mse" => Metric::InterpMse,
            "extrap_mse" => Metric::ExtrapMse,
            "sq_error" => Metric::SquaredError,
            other => match other.strip_prefix("theta_").and_then(|j| j.parse().ok()) {
                Some(j) => Metric::Theta(j),
                None => return Err(invalid(format!("unknown metric `{s}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub experiment: String,
    pub replicate: usize,
    pub estimator: String,
    pub metric: Metric,
    pub value: f64,
}

impl MetricsRecord {
    pub fn new(experiment: &str, replicate: usize, estimator: &str, metric: Metric, value: f64) -> Self {
        MetricsRecord { experiment: experiment.to_string(), replicate, estimator: estimator.to_string(), metric, value }
    }
}

/// Check finiteness and key uniqueness of a record set.
pub fn validate_records(records: &[MetricsRecord]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for r in records {
        if !r.value.is_finite() {
            return Err(Error::InvalidData(format!("non-finite value for {}/{}/{}", r.estimator, r.replicate, r.metric)));
        }
        let key = (&r.experiment, r.replicate, &r.estimator, r.metric);
        if seen.insert(key, ()).is_some() {
            return Err(Error::InvalidData(format!("duplicate record {}/{}/{}", r.estimator, r.replicate, r.metric)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: String,
    pub estimator: String,
    pub metric: Metric,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Standard error of the mean (sample sd with divisor R−1 over √R; 0 for one value).
    pub se: f64,
}

fn summarize(values: &mut [f64]) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) };
    let se = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    (mean, median, se)
}

/// Mean, median and SE per (experiment, estimator, metric), in key order.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, &str, Metric), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.experiment, &r.estimator, r.metric)).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((experiment, estimator, metric), mut values)| {
            let (mean, median, se) = summarize(&mut values);
            AggregateRow {
                experiment: experiment.to_string(),
                estimator: estimator.to_string(),
                metric,
                count: values.len(),
                mean,
                median,
                se,
            }
        })
        .collect()
}

/// Bias² and variance per (experiment, estimator) from `Theta(j)` records,
/// against the given truth; estimators with fewer than two complete
/// replicates are skipped.
pub fn bias_variance_from_records(records: &[MetricsRecord], theta_star: &[f64]) -> Vec<(String, String, BiasVariance)> {
    let mut groups: BTreeMap<(&str, &str), BTreeMap<usize, Vec<Option<f64>>>> = BTreeMap::new();
    for r in records {
        if let Metric::Theta(j) = r.metric {
            if j < theta_star.len() {
                let reps = groups.entry((&r.experiment, &r.estimator)).or_default();
                reps.entry(r.replicate).or_insert_with(|| vec![None; theta_star.len()])[j] = Some(r.value);
            }
        }
    }
    let mut out = Vec::new();
    for ((experiment, estimator), reps) in groups {
        let thetas: Vec<Vec<f64>> = reps.into_values().filter_map(|v| v.into_iter().collect::<Option<Vec<f64>>>()).collect();
        if let Ok(bv) = bias_variance(&thetas, theta_star) {
            out.push((experiment.to_string(), estimator.to_string(), bv));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::FunctionModel;
    use crate::synthgen::{gen_labelnoise, NoiseModel};

    fn grid_data(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.713).sin(), (i as f64 * 0.291).cos() * 2.0, i as f64 / n as f64]).collect();
        Dataset::from_rows(&rows, None).unwrap()
    }

    #[test]
    fn ale_of_linear_model() {
        let beta = [1.5, -0.25, 3.0];
        let f = FunctionModel(move |x: &[f64]| 0.7 + beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>());
        let d = grid_data(400);
        for j in 0..3 {
            let c = ale(&f, &d, j, DEFAULT_ALE_BINS).unwrap();
            let span = c.edges[c.edges.len() - 1] - c.edges[0];
            let gap = c.edge_values[c.edge_values.len() - 1] - c.edge_values[0];
            assert!((gap - beta[j] * span).abs() < 1e-9);
            assert!(c.centering_error().abs() < 1e-10);
            assert_eq!(c.counts.iter().sum::<usize>(), 400);
            assert!(c.counts.iter().all(|&k| k > 0));
            assert!(c.edges.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn ale_flat_when_independent() {
        let f = FunctionModel(|x: &[f64]| x[0] * x[0]);
        let c = ale(&f, &grid_data(100), 1, 10).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn ale_errors() {
        let f = FunctionModel(|x: &[f64]| x[0]);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let d = Dataset::from_rows(&rows, None).unwrap();
        assert!(ale(&f, &d, 1, 5).is_err());
        assert!(ale(&f, &d, 0, 1).is_err());
        assert!(ale(&f, &d, 2, 5).is_err());
    }

    #[test]
    fn surrogate_cases() {
        let d = grid_data(200);
        let s = linear_surrogate(&FunctionModel(|x: &[f64]| 2.0 * x[0]), &d, &[0]).unwrap();
        assert!((s.r2 - 1.0).abs() < 1e-12);
        assert!(s.coef[0].abs() < 1e-9 && (s.coef[1] - 2.0).abs() < 1e-9);
        let flat = linear_surrogate(&FunctionModel(|_: &[f64]| 3.0), &d, &[1]).unwrap();
        assert_eq!(flat.r2, 1.0);
    }

    #[test]
    fn bias_variance_identities() {
        let star = [1.0, -2.0];
        let alt: Vec<Vec<f64>> = (0..4).map(|r| vec![1.0 + if r % 2 == 0 { 1.0 } else { -1.0 }, -2.0]).collect();
        let bv = bias_variance(&alt, &star).unwrap();
        assert_eq!((bv.bias2, bv.variance), (0.0, 1.0));
        let same = vec![star.to_vec(); 3];
        assert_eq!(bias_variance(&same, &star).unwrap().mse(), 0.0);
        assert!(bias_variance(&same[..1], &star).is_err());
    }

    #[test]
    fn bayes_has_zero_excess() {
        for model in [NoiseModel::M1, NoiseModel::M2] {
            let b = gen_labelnoise(model, 50, 0.2, 2000, 3).unwrap();
            let bayes = crate::learners::bayes::BayesClassifier(model);
            assert_eq!(excess_risk(&bayes, &b).unwrap(), 0.0);
        }
    }

    #[test]
    fn metric_labels_round_trip() {
        for m in [Metric::TestMse, Metric::RelativeMse, Metric::Bias2, Metric::Variance, Metric::ExcessRisk, Metric::R2Surrogate, Metric::TestError, Metric::InterpMse, Metric::ExtrapMse, Metric::SquaredError, Metric::Theta(3)] {
            assert_eq!(m.label().parse::<Metric>().unwrap(), m);
        }
        assert!("theta_x".parse::<Metric>().is_err());
    }

    #[test]
    fn aggregate_and_validate() {
        let recs = vec![
            MetricsRecord::new("e", 0, "a", Metric::TestMse, 1.0),
            MetricsRecord::new("e", 1, "a", Metric::TestMse, 3.0),
            MetricsRecord::new("e", 2, "a", Metric::TestMse, 8.0),
            MetricsRecord::new("e", 0, "b", Metric::TestMse, 2.0),
        ];
        validate_records(&recs).unwrap();
        let agg = aggregate(&recs);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].count, agg[0].mean, agg[0].median), (3, 4.0, 3.0));
        assert!((agg[0].se - (13.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(agg[1].se, 0.0);
        let mut dup = recs.clone();
        dup.push(recs[0].clone());
        assert!(validate_records(&dup).is_err());
    }
}

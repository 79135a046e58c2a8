//! Typed experiment plans: one per DGP family, built from a validated
//! [`ExperimentConfig`], plus the per-replicate work.

use std::str::FromStr;
use std::sync::Arc;

use statbench_core::covshift::{covshift_mse, default_lambda_grid, iw_fit, naive_fit, pl_select, wang_oracle_select};
use statbench_core::evalsuite::{excess_risk, linear_surrogate, test_error, Metric, MetricsRecord};
use statbench_core::hte::{self, CateLearner, DEFAULT_CLIP};
use statbench_core::learners::bayes::BayesClassifier;
use statbench_core::learners::gbrt::GbrtPredictor;
use statbench_core::learners::gpr::GprPredictor;
use statbench_core::learners::knn::{fit_knn_cv, KnnPredictor};
use statbench_core::learners::krr::{KrrKernel, KrrPredictor};
use statbench_core::learners::lasso::LassoPredictor;
use statbench_core::learners::lda::{fit_lda, LdaPredictor};
use statbench_core::learners::linear::OlsPredictor;
use statbench_core::learners::poly::PolyRidge;
use statbench_core::learners::{Classifier, FittedModel, FunctionPredictor, MeanPredictor, Predictor, ThresholdClassifier, WeightedRegressor};
use statbench_core::mestim::{mc_truth, semisup_components, LogisticPredictor, SemiSupStrategy, WorkingModel};
use statbench_core::rng::{derive_seed, rng_from_seed, stream};
use statbench_core::synthgen::{
    gen_cate, gen_cate_features, gen_covshift, gen_function_probe, gen_labelnoise, gen_semisup, gen_sparse_linear, BetaType,
    CateOracle, CateSetup, CovType, FunctionProbe, MeanFunction, NoiseModel, ProbeKind, SemiSupSetting,
};
use statbench_core::Dataset;

use crate::config::{invalid_field, ConfigError, DgpSpec, ExperimentConfig};
use crate::protocol::Task;
use crate::remote::{RemotePredictor, ENDPOINT_ENV};

/// Offset separating replicate seeds from the named sub-streams.
const REPLICATE_STREAM_BASE: u64 = 1 << 32;
pub const CV_FOLDS: usize = 5;
pub const KRR_LAMBDA: f64 = 1e-3;

/// Master seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, REPLICATE_STREAM_BASE + r as u64)
}

/// Seed handed to the `k`-th estimator inside a replicate.
pub fn estimator_seed(rep_seed: u64, k: usize) -> u64 {
    derive_seed(derive_seed(rep_seed, stream::FIT), k as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Ols,
    Gbrt,
    Gpr,
    Krr,
    Lasso,
    Knn,
    Lda,
    Logistic,
    Poly,
    Mean,
    Oracle,
    Tabpfn,
}

impl BaseKind {
    pub const ALL: [BaseKind; 12] = [
        Self::Ols,
        Self::Gbrt,
        Self::Gpr,
        Self::Krr,
        Self::Lasso,
        Self::Knn,
        Self::Lda,
        Self::Logistic,
        Self::Poly,
        Self::Mean,
        Self::Oracle,
        Self::Tabpfn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::Gbrt => "gbrt",
            Self::Gpr => "gpr",
            Self::Krr => "krr",
            Self::Lasso => "lasso",
            Self::Knn => "knn",
            Self::Lda => "lda",
            Self::Logistic => "logistic",
            Self::Poly => "poly",
            Self::Mean => "mean",
            Self::Oracle => "oracle",
            Self::Tabpfn => "tabpfn",
        }
    }

    fn is_weighted(self) -> bool {
        matches!(self, Self::Gbrt | Self::Poly | Self::Mean)
    }
}

impl FromStr for BaseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|b| b.label() == key).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|b| b.label()).collect();
            format!("unknown predictor `{s}` (known: {})", names.join(", "))
        })
    }
}

pub type OracleFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// What a base needs beyond its name.
#[derive(Clone)]
pub struct BaseContext {
    pub seed: u64,
    pub task: Task,
    pub remote: Option<(String, u64)>,
    pub oracle: Option<OracleFn>,
}

pub fn make_predictor(kind: BaseKind, ctx: &BaseContext) -> statbench_core::Result<Box<dyn Predictor>> {
    let seed = ctx.seed;
    Ok(match kind {
        BaseKind::Ols => Box::new(OlsPredictor),
        BaseKind::Gbrt => Box::new(GbrtPredictor::new(seed)),
        BaseKind::Gpr => Box::new(GprPredictor::new(seed)),
        BaseKind::Krr => Box::new(KrrPredictor { kernel: KrrKernel::MedianRbf, lambda: KRR_LAMBDA }),
        BaseKind::Lasso => Box::new(LassoPredictor { folds: CV_FOLDS, seed }),
        BaseKind::Knn => Box::new(KnnPredictor { folds: CV_FOLDS, seed }),
        BaseKind::Lda => Box::new(LdaPredictor),
        BaseKind::Logistic => Box::new(LogisticPredictor),
        BaseKind::Poly => Box::new(PolyRidge::default()),
        BaseKind::Mean => Box::new(MeanPredictor),
        BaseKind::Oracle => {
            let f = ctx.oracle.clone().ok_or_else(|| statbench_core::Error::Predictor("no oracle function in this context".into()))?;
            Box::new(FunctionPredictor(move |x: &[f64]| f(x)))
        }
        BaseKind::Tabpfn => {
            let (endpoint, timeout) = ctx.remote.clone().ok_or_else(|| statbench_core::Error::Predictor("no remote endpoint".into()))?;
            Box::new(RemotePredictor::new(&endpoint, timeout, ctx.task))
        }
    })
}

pub fn make_weighted(kind: BaseKind, seed: u64) -> Option<Box<dyn WeightedRegressor>> {
    match kind {
        BaseKind::Gbrt => Some(Box::new(GbrtPredictor::new(seed))),
        BaseKind::Poly => Some(Box::new(PolyRidge::default())),
        BaseKind::Mean => Some(Box::new(MeanPredictor)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Metric(Metric),
    /// Every component of the estimate (`theta_0`, `theta_1`, ...).
    Theta,
}

#[derive(Debug, Clone)]
pub enum EstimatorPlan {
    Semisup { strategy: SemiSupStrategy, imputer: Option<BaseKind> },
    Cate { learner: CateLearner, base: BaseKind, propensity: BaseKind },
    CovshiftNaive,
    CovshiftIw,
    CovshiftPl,
    CovshiftOracle,
    Bayes,
    Lda { clean: bool },
    Knn { clean: bool },
    Classifier { base: BaseKind, clean: bool },
    Lasso,
    Model { base: BaseKind },
}

#[derive(Debug, Clone)]
pub enum FamilyPlan {
    Semisup { setting: SemiSupSetting, model: WorkingModel, tau: Option<f64>, p: usize, n: usize, m: usize, n_mc: usize },
    Cate { setup: CateSetup, n: usize, sigma2: f64, n_test: usize },
    Covshift { mean_fn: MeanFunction, n: usize, m: usize, n_aux: usize },
    Noise { model: NoiseModel, n: usize, rho: f64, n_test: usize },
    Sparse { p: usize, s: usize, beta_type: BetaType, cov_type: CovType, snr: f64, n: usize, n_test: usize },
    Probe { kind: ProbeKind, n: usize },
}

/// A validated config, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub family: FamilyPlan,
    pub estimators: Vec<(String, EstimatorPlan)>,
    pub wants: Vec<Want>,
    /// Label `relative_mse` divides by.
    pub reference: Option<String>,
}

fn parse<T: FromStr>(field: &str, s: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| invalid_field(field, e.to_string()))
}

fn positive(field: &str, v: usize) -> Result<usize, ConfigError> {
    if v == 0 {
        return Err(invalid_field(field, "must be >= 1"));
    }
    Ok(v)
}

fn allowed_metrics(family: &FamilyPlan) -> &'static [&'static str] {
    match family {
        FamilyPlan::Semisup { .. } => &["sq_error", "theta", "bias2", "variance"],
        FamilyPlan::Cate { .. } | FamilyPlan::Covshift { .. } => &["test_mse"],
        FamilyPlan::Noise { .. } => &["excess_risk", "test_error"],
        FamilyPlan::Sparse { .. } => &["test_mse", "relative_mse", "r2_surrogate", "theta", "bias2", "variance"],
        FamilyPlan::Probe { .. } => &["test_mse", "interp_mse", "extrap_mse"],
    }
}

fn family_plan(dgp: &DgpSpec) -> Result<FamilyPlan, ConfigError> {
    Ok(match dgp {
        DgpSpec::Semisup { setting, p, n, m, tau, n_mc } => {
            let setting: SemiSupSetting = parse("dgp.setting", setting)?;
            let model = match setting {
                SemiSupSetting::Linear => WorkingModel::LinearReg,
                SemiSupSetting::Logistic => WorkingModel::LogisticReg,
                SemiSupSetting::Quantile => {
                    let t = tau.ok_or_else(|| invalid_field("dgp.tau", "required for the quantile setting"))?;
                    if !(t > 0.0 && t < 1.0) {
                        return Err(invalid_field("dgp.tau", "must lie in (0, 1)"));
                    }
                    WorkingModel::QuantileReg(t)
                }
            };
            FamilyPlan::Semisup {
                setting,
                model,
                tau: *tau,
                p: positive("dgp.p", *p)?,
                n: positive("dgp.n", *n)?,
                m: positive("dgp.m", *m)?,
                n_mc: positive("dgp.n_mc", *n_mc)?,
            }
        }
        DgpSpec::Cate { setup, n, sigma2, n_test } => {
            if !(*sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(invalid_field("dgp.sigma2", "must be positive"));
            }
            FamilyPlan::Cate { setup: parse("dgp.setup", setup)?, n: positive("dgp.n", *n)?, sigma2: *sigma2, n_test: positive("dgp.n_test", *n_test)? }
        }
        DgpSpec::Covshift { mean_fn, n, m, n_aux } => FamilyPlan::Covshift {
            mean_fn: parse("dgp.mean_fn", mean_fn)?,
            n: positive("dgp.n", *n)?,
            m: positive("dgp.m", *m)?,
            n_aux: positive("dgp.n_aux", *n_aux)?,
        },
        DgpSpec::Noise { model, n, rho, n_test } => {
            if !(0.0..0.5).contains(rho) {
                return Err(invalid_field("dgp.rho", "must lie in [0, 0.5)"));
            }
            FamilyPlan::Noise { model: parse("dgp.model", model)?, n: positive("dgp.n", *n)?, rho: *rho, n_test: positive("dgp.n_test", *n_test)? }
        }
        DgpSpec::SparseLinear { p, s, beta_type, cov_type, snr, n, n_test } => {
            if *s == 0 || s > p {
                return Err(invalid_field("dgp.s", "must lie in [1, p]"));
            }
            if !(*snr > 0.0 && snr.is_finite()) {
                return Err(invalid_field("dgp.snr", "must be positive"));
            }
            FamilyPlan::Sparse {
                p: *p,
                s: *s,
                beta_type: parse("dgp.beta_type", beta_type)?,
                cov_type: parse("dgp.cov_type", cov_type)?,
                snr: *snr,
                n: positive("dgp.n", *n)?,
                n_test: positive("dgp.n_test", *n_test)?,
            }
        }
        DgpSpec::Probe { kind, n } => {
            if *n < 2 {
                return Err(invalid_field("dgp.n", "must be >= 2"));
            }
            FamilyPlan::Probe { kind: parse("dgp.kind", kind)?, n: *n }
        }
    })
}

fn base_of(field: &str, s: Option<&String>) -> Result<BaseKind, ConfigError> {
    let s = s.ok_or_else(|| invalid_field(field, "required"))?;
    parse(field, s)
}

fn clean_of(field: &str, s: Option<&String>) -> Result<bool, ConfigError> {
    match s.map(String::as_str) {
        None | Some("noisy") => Ok(false),
        Some("clean") => Ok(true),
        Some(other) => Err(invalid_field(field, format!("`{other}` is neither `clean` nor `noisy`"))),
    }
}

fn estimator_plan(family: &FamilyPlan, k: usize, e: &crate::config::EstimatorSpec) -> Result<EstimatorPlan, ConfigError> {
    let f = |name: &str| format!("estimators.{k}.{name}");
    let unknown = || invalid_field(f("name"), format!("`{}` is not an estimator of the {} family", e.name, family_name(family)));
    let plan = match family {
        FamilyPlan::Semisup { .. } => {
            let strategy: SemiSupStrategy = e.name.parse().map_err(|_| unknown())?;
            let imputer = match strategy {
                SemiSupStrategy::Vanilla => None,
                _ => Some(base_of(&f("base"), e.base.as_ref())?),
            };
            EstimatorPlan::Semisup { strategy, imputer }
        }
        FamilyPlan::Cate { .. } => {
            let learner: CateLearner = e.name.parse().map_err(|_| unknown())?;
            let base = base_of(&f("base"), e.base.as_ref())?;
            let propensity = match &e.propensity {
                Some(p) => parse(&f("propensity"), p)?,
                None => BaseKind::Logistic,
            };
            if matches!(learner, CateLearner::R | CateLearner::OracleR) && !base.is_weighted() {
                return Err(invalid_field(f("base"), format!("the {} learner needs a weighted base (gbrt, poly, mean)", learner.label())));
            }
            EstimatorPlan::Cate { learner, base, propensity }
        }
        FamilyPlan::Covshift { .. } => match e.name.as_str() {
            "naive" => EstimatorPlan::CovshiftNaive,
            "iw" => EstimatorPlan::CovshiftIw,
            "pl" => EstimatorPlan::CovshiftPl,
            "wang_oracle" | "oracle" => EstimatorPlan::CovshiftOracle,
            "model" => EstimatorPlan::Model { base: base_of(&f("base"), e.base.as_ref())? },
            _ => return Err(unknown()),
        },
        FamilyPlan::Noise { .. } => {
            let clean = clean_of(&f("train"), e.train.as_ref())?;
            match e.name.as_str() {
                "bayes" => EstimatorPlan::Bayes,
                "lda" => EstimatorPlan::Lda { clean },
                "knn" => EstimatorPlan::Knn { clean },
                "model" => EstimatorPlan::Classifier { base: base_of(&f("base"), e.base.as_ref())?, clean },
                _ => return Err(unknown()),
            }
        }
        FamilyPlan::Sparse { .. } => match e.name.as_str() {
            "lasso" => EstimatorPlan::Lasso,
            "model" => EstimatorPlan::Model { base: base_of(&f("base"), e.base.as_ref())? },
            _ => return Err(unknown()),
        },
        FamilyPlan::Probe { .. } => match e.name.as_str() {
            "model" => EstimatorPlan::Model { base: base_of(&f("base"), e.base.as_ref())? },
            _ => return Err(unknown()),
        },
    };
    let oracle_ok = matches!(family, FamilyPlan::Semisup { .. } | FamilyPlan::Covshift { .. } | FamilyPlan::Probe { .. } | FamilyPlan::Cate { .. });
    for b in e.predictors() {
        if b.eq_ignore_ascii_case("oracle") && !oracle_ok {
            return Err(invalid_field(f("base"), "no oracle predictor in this family"));
        }
    }
    Ok(plan)
}

fn family_name(f: &FamilyPlan) -> &'static str {
    match f {
        FamilyPlan::Semisup { .. } => "semisup",
        FamilyPlan::Cate { .. } => "cate",
        FamilyPlan::Covshift { .. } => "covshift",
        FamilyPlan::Noise { .. } => "noise",
        FamilyPlan::Sparse { .. } => "sparse-linear",
        FamilyPlan::Probe { .. } => "probe",
    }
}

impl Plan {
    /// Check everything that can be checked without running.
    pub fn validate(config: &ExperimentConfig) -> Result<Plan, ConfigError> {
        if config.name.trim().is_empty() {
            return Err(invalid_field("name", "must not be empty"));
        }
        positive("replicates", config.replicates)?;
        if config.estimators.is_empty() {
            return Err(invalid_field("estimators", "at least one estimator is required"));
        }
        if config.metrics.is_empty() {
            return Err(invalid_field("metrics", "at least one metric is required"));
        }
        let family = family_plan(&config.dgp)?;
        let mut estimators = Vec::new();
        for (k, e) in config.estimators.iter().enumerate() {
            let plan = estimator_plan(&family, k, e)?;
            let label = e.display_label();
            if label.is_empty() || label.contains([',', '"', '\n']) {
                return Err(invalid_field(format!("estimators.{k}.label"), format!("`{label}` is not a usable label")));
            }
            if estimators.iter().any(|(l, _)| *l == label) {
                return Err(invalid_field(format!("estimators.{k}"), format!("duplicate estimator label `{label}`")));
            }
            if e.predictors().any(|b| b.eq_ignore_ascii_case("tabpfn")) && config.remote.endpoint.is_none() {
                return Err(invalid_field(
                    format!("estimators.{k}"),
                    format!("estimator `{label}` uses predictor `tabpfn` but no remote endpoint is configured (set remote.endpoint or {ENDPOINT_ENV})"),
                ));
            }
            estimators.push((label, plan));
        }
        let allowed = allowed_metrics(&family);
        let mut wants = Vec::new();
        for (k, m) in config.metrics.iter().enumerate() {
            if !allowed.contains(&m.as_str()) {
                return Err(invalid_field(format!("metrics.{k}"), format!("`{m}` is not available for the {} family (available: {})", family_name(&family), allowed.join(", "))));
            }
            let w = if m == "theta" { Want::Theta } else { Want::Metric(m.parse().map_err(|e: statbench_core::Error| invalid_field(format!("metrics.{k}"), e.to_string()))?) };
            if !wants.contains(&w) {
                wants.push(w);
            }
        }
        let wants_rel = wants.contains(&Want::Metric(Metric::RelativeMse));
        let reference = if wants_rel {
            let r = config.reference.clone().unwrap_or_else(|| estimators[0].0.clone());
            if !estimators.iter().any(|(l, _)| *l == r) {
                return Err(invalid_field("reference", format!("`{r}` is not an estimator label")));
            }
            Some(r)
        } else {
            None
        };
        Ok(Plan { config: config.clone(), family, estimators, wants, reference })
    }

    fn wants(&self, m: Metric) -> bool {
        self.wants.contains(&Want::Metric(m))
    }

    fn wants_theta(&self) -> bool {
        self.wants.contains(&Want::Theta) || self.wants(Metric::Bias2) || self.wants(Metric::Variance)
    }

    fn remote(&self) -> Option<(String, u64)> {
        self.config.remote.endpoint.clone().map(|e| (e, self.config.remote.timeout_ms))
    }

    /// Run-level quantities shared by every replicate.
    pub fn prepare(&self) -> statbench_core::Result<Prepared> {
        let master = self.config.seed;
        let (theta_star, cate_test, notes) = match &self.family {
            FamilyPlan::Semisup { setting, tau, p, n_mc, .. } => {
                let t = mc_truth(*setting, *p, *tau, *n_mc, derive_seed(master, stream::AUX))?;
                (Some(t.theta), None, t.notes)
            }
            FamilyPlan::Cate { n_test, .. } => {
                let mut rng = rng_from_seed(derive_seed(master, stream::AUX));
                (None, Some(Dataset::unlabeled(gen_cate_features(&mut rng, *n_test))?), Vec::new())
            }
            _ => (None, None, Vec::new()),
        };
        Ok(Prepared { plan: self.clone(), theta_star, cate_test, notes })
    }
}

/// One failure inside a replicate; the rest of the replicate continues.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunError {
    pub replicate: usize,
    pub estimator: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub plan: Plan,
    /// Population target for `sq_error`, `bias2`, `variance` (semisup only;
    /// sparse designs carry theirs per replicate).
    pub theta_star: Option<Vec<f64>>,
    cate_test: Option<Dataset>,
    pub notes: Vec<String>,
}

/// Output of one replicate, in estimator order.
#[derive(Debug, Clone, Default)]
pub struct ReplicateOutput {
    pub records: Vec<MetricsRecord>,
    pub errors: Vec<RunError>,
}

struct Emit<'a> {
    exp: &'a str,
    r: usize,
    out: &'a mut ReplicateOutput,
}

impl Emit<'_> {
    fn put(&mut self, label: &str, metric: Metric, value: f64) {
        self.out.records.push(MetricsRecord::new(self.exp, self.r, label, metric, value));
    }

    fn fail(&mut self, label: &str, e: impl std::fmt::Display) {
        self.out.errors.push(RunError { replicate: self.r, estimator: label.to_string(), message: e.to_string() });
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

impl Prepared {
    /// Theta target of a sparse design: intercept 0 and the unit coefficients on the support.
    pub fn sparse_target(s: usize) -> Vec<f64> {
        let mut t = vec![1.0; s + 1];
        t[0] = 0.0;
        t
    }

    pub fn theta_target(&self) -> Option<Vec<f64>> {
        match &self.plan.family {
            FamilyPlan::Sparse { s, .. } => Some(Self::sparse_target(*s)),
            _ => self.theta_star.clone(),
        }
    }

    pub fn replicate(&self, r: usize) -> ReplicateOutput {
        let mut out = ReplicateOutput::default();
        let seed = replicate_seed(self.plan.config.seed, r);
        let mut emit = Emit { exp: &self.plan.config.name, r, out: &mut out };
        let res = match &self.plan.family {
            FamilyPlan::Semisup { .. } => self.run_semisup(seed, &mut emit),
            FamilyPlan::Cate { .. } => self.run_cate(seed, &mut emit),
            FamilyPlan::Covshift { .. } => self.run_covshift(seed, &mut emit),
            FamilyPlan::Noise { .. } => self.run_noise(seed, &mut emit),
            FamilyPlan::Sparse { .. } => self.run_sparse(seed, &mut emit),
            FamilyPlan::Probe { .. } => self.run_probe(seed, &mut emit),
        };
        if let Err(e) = res {
            emit.fail("*", format!("data generation: {e}"));
        }
        out
    }

    fn ctx(&self, rep_seed: u64, k: usize, task: Task, oracle: Option<OracleFn>) -> BaseContext {
        BaseContext { seed: estimator_seed(rep_seed, k), task, remote: self.plan.remote(), oracle }
    }

    fn emit_theta(&self, emit: &mut Emit, label: &str, theta: &[f64], target: Option<&[f64]>) {
        if self.plan.wants_theta() {
            for (j, v) in theta.iter().enumerate() {
                emit.put(label, Metric::Theta(j), *v);
            }
        }
        if let (true, Some(t)) = (self.plan.wants(Metric::SquaredError), target) {
            emit.put(label, Metric::SquaredError, theta.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }

    fn run_semisup(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Semisup { setting, model, p, n, m, .. } = self.plan.family else { unreachable!() };
        let data = gen_semisup(setting, p, n, m, seed)?;
        let task = if model == WorkingModel::LogisticReg { Task::Classification } else { Task::Regression };
        let oracle: OracleFn = Arc::new(move |x: &[f64]| setting.regression_function(x));
        // strategies sharing an imputer share its fit
        let mut cache: Vec<(Option<BaseKind>, Result<statbench_core::mestim::SemiSupComponents, String>)> = Vec::new();
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let EstimatorPlan::Semisup { strategy, imputer } = est else { unreachable!() };
            let key = *imputer;
            if !cache.iter().any(|(b, _)| *b == key) {
                let comps = (|| {
                    let pred = match imputer {
                        Some(b) => Some(make_predictor(*b, &self.ctx(seed, k, task, Some(oracle.clone())))?),
                        None => None,
                    };
                    semisup_components(model, pred.as_deref(), &data.labeled, Some(&data.unlabeled))
                })()
                .map_err(|e| e.to_string());
                cache.push((key, comps));
            }
            let comps = &cache.iter().find(|(b, _)| *b == key).expect("inserted above").1;
            match comps.as_ref().map_err(Clone::clone).and_then(|c| c.estimate(*strategy).map_err(|e| e.to_string())) {
                Ok(est) => self.emit_theta(emit, label, &est.theta, self.theta_star.as_deref()),
                Err(e) => emit.fail(label, e),
            }
        }
        Ok(())
    }

    fn run_cate(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Cate { setup, n, sigma2, .. } = self.plan.family else { unreachable!() };
        let data = gen_cate(setup, n, sigma2, seed)?;
        let test = self.cate_test.as_ref().expect("prepared");
        let o = CateOracle { setup };
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let EstimatorPlan::Cate { learner, base, propensity } = est else { unreachable!() };
            let res = (|| {
                let ctx = self.ctx(seed, k, Task::Regression, None);
                let outcome: Box<dyn Predictor> = if *base == BaseKind::Oracle {
                    if *learner == CateLearner::S {
                        Box::new(hte::oracle::joint_outcome(o))
                    } else {
                        Box::new(hte::oracle::ArmOutcome(o))
                    }
                } else {
                    make_predictor(*base, &ctx)?
                };
                let effect: Box<dyn Predictor> =
                    if *base == BaseKind::Oracle { Box::new(hte::oracle::effect(o)) } else { make_predictor(*base, &ctx)? };
                let prop: Box<dyn Predictor> = if *propensity == BaseKind::Oracle {
                    Box::new(hte::oracle::propensity(o))
                } else {
                    make_predictor(*propensity, &BaseContext { task: Task::Classification, ..ctx.clone() })?
                };
                let est = match learner {
                    CateLearner::S => hte::s_learner(outcome.as_ref(), &data)?,
                    CateLearner::T => hte::t_learner(outcome.as_ref(), &data)?,
                    CateLearner::X => hte::x_learner_with(outcome.as_ref(), effect.as_ref(), prop.as_ref(), &data)?,
                    CateLearner::DR => hte::dr_learner_with(outcome.as_ref(), effect.as_ref(), prop.as_ref(), &data, DEFAULT_CLIP)?,
                    CateLearner::R => {
                        let w = make_weighted(*base, ctx.seed).expect("validated weighted base");
                        hte::r_learner(w.as_ref(), outcome.as_ref(), prop.as_ref(), &data, DEFAULT_CLIP)?
                    }
                    CateLearner::OracleR => {
                        let w = make_weighted(*base, ctx.seed).expect("validated weighted base");
                        hte::oracle_r_learner(w.as_ref(), &data, DEFAULT_CLIP)?
                    }
                };
                hte::evaluate_cate(&est, test, &o)
            })();
            match res {
                Ok(v) => emit.put(label, Metric::TestMse, v),
                Err(e) => emit.fail(label, e),
            }
        }
        Ok(())
    }

    fn run_covshift(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Covshift { mean_fn, n, m, n_aux } = self.plan.family else { unreachable!() };
        let bundle = gen_covshift(mean_fn, n, m, n_aux, seed)?;
        let oracle: OracleFn = Arc::new(move |x: &[f64]| mean_fn.eval(x[0]));
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let ctx = self.ctx(seed, k, Task::Regression, Some(oracle.clone()));
            let res = (|| -> statbench_core::Result<f64> {
                match est {
                    EstimatorPlan::CovshiftNaive => covshift_mse(&naive_fit(&bundle, ctx.seed)?, &bundle),
                    EstimatorPlan::CovshiftIw => covshift_mse(&iw_fit(&bundle, ctx.seed)?, &bundle),
                    EstimatorPlan::CovshiftPl => {
                        covshift_mse(pl_select(&bundle, &default_lambda_grid(), KrrKernel::MedianRbf, ctx.seed)?.chosen(), &bundle)
                    }
                    EstimatorPlan::CovshiftOracle => {
                        covshift_mse(wang_oracle_select(&bundle, &default_lambda_grid(), KrrKernel::MedianRbf, ctx.seed)?.chosen(), &bundle)
                    }
                    EstimatorPlan::Model { base } => covshift_mse(make_predictor(*base, &ctx)?.fit(&bundle.source)?.as_ref(), &bundle),
                    _ => unreachable!(),
                }
            })();
            match res {
                Ok(v) => emit.put(label, Metric::TestMse, v),
                Err(e) => emit.fail(label, e),
            }
        }
        Ok(())
    }

    fn run_noise(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Noise { model, n, rho, n_test } = self.plan.family else { unreachable!() };
        let bundle = gen_labelnoise(model, n, rho, n_test, seed)?;
        let clean = bundle.clean_train();
        let test_x = bundle.test.without_labels();
        let test_y = bundle.test.require_labels()?;
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let ctx = self.ctx(seed, k, Task::Classification, None);
            let train = |c: bool| if c { &clean } else { &bundle.train };
            let res = (|| -> statbench_core::Result<Box<dyn Classifier>> {
                Ok(match est {
                    EstimatorPlan::Bayes => Box::new(BayesClassifier(model)),
                    EstimatorPlan::Lda { clean } => Box::new(fit_lda(train(*clean))?),
                    EstimatorPlan::Knn { clean } => Box::new(fit_knn_cv(train(*clean), CV_FOLDS, ctx.seed)?),
                    EstimatorPlan::Classifier { base, clean } => Box::new(ThresholdClassifier(make_predictor(*base, &ctx)?.fit(train(*clean))?)),
                    _ => unreachable!(),
                })
            })()
            .and_then(|c| {
                let mut vals = Vec::new();
                if self.plan.wants(Metric::ExcessRisk) {
                    vals.push((Metric::ExcessRisk, excess_risk(c.as_ref(), &bundle)?));
                }
                if self.plan.wants(Metric::TestError) {
                    vals.push((Metric::TestError, test_error(&c.classify(&test_x)?, test_y)));
                }
                Ok(vals)
            });
            match res {
                Ok(vals) => vals.into_iter().for_each(|(m, v)| emit.put(label, m, v)),
                Err(e) => emit.fail(label, e),
            }
        }
        Ok(())
    }

    fn run_sparse(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Sparse { p, s, beta_type, cov_type, snr, n, n_test } = self.plan.family else { unreachable!() };
        let design = gen_sparse_linear(p, s, beta_type, cov_type, snr, n, n_test, seed)?;
        let test_x = design.test.without_labels();
        let test_y = design.test.require_labels()?;
        let target = Self::sparse_target(s);
        let mut test_mse: Vec<(String, f64)> = Vec::new();
        let mut pending: Vec<(String, Vec<(Metric, f64)>, Option<Vec<f64>>)> = Vec::new();
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let ctx = self.ctx(seed, k, Task::Regression, None);
            let res = (|| -> statbench_core::Result<_> {
                let model: Box<dyn FittedModel> = match est {
                    EstimatorPlan::Lasso => LassoPredictor { folds: CV_FOLDS, seed: ctx.seed }.fit(&design.train)?,
                    EstimatorPlan::Model { base } => make_predictor(*base, &ctx)?.fit(&design.train)?,
                    _ => unreachable!(),
                };
                let v = mse(&model.predict_mean(&test_x)?, test_y);
                let mut vals = Vec::new();
                let mut theta = None;
                if self.plan.wants(Metric::R2Surrogate) || self.plan.wants_theta() {
                    let sur = linear_surrogate(model.as_ref(), &design.test, &design.support)?;
                    if self.plan.wants(Metric::R2Surrogate) {
                        vals.push((Metric::R2Surrogate, sur.r2));
                    }
                    theta = Some(sur.coef);
                }
                Ok((v, vals, theta))
            })();
            match res {
                Ok((v, vals, theta)) => {
                    test_mse.push((label.clone(), v));
                    pending.push((label.clone(), vals, theta));
                }
                Err(e) => emit.fail(label, e),
            }
        }
        let reference = self.plan.reference.as_ref().and_then(|r| test_mse.iter().find(|(l, _)| l == r).map(|(_, v)| *v));
        if self.plan.reference.is_some() && reference.is_none() {
            emit.fail(self.plan.reference.as_deref().unwrap_or(""), "reference estimator failed; relative_mse skipped");
        }
        for ((label, v), (_, vals, theta)) in test_mse.iter().zip(pending) {
            if self.plan.wants(Metric::TestMse) {
                emit.put(label, Metric::TestMse, *v);
            }
            if let Some(rv) = reference {
                emit.put(label, Metric::RelativeMse, v / rv);
            }
            for (m, x) in vals {
                emit.put(label, m, x);
            }
            if let Some(t) = theta {
                self.emit_theta(emit, label, &t, Some(&target));
            }
        }
        Ok(())
    }

    fn run_probe(&self, seed: u64, emit: &mut Emit) -> statbench_core::Result<()> {
        let FamilyPlan::Probe { kind, n } = self.plan.family else { unreachable!() };
        let probe = gen_function_probe(kind, n, seed)?;
        let truth = probe.truth.clone();
        let oracle: OracleFn = Arc::new(move |x: &[f64]| truth.eval(x));
        let grid = &probe.eval_grid;
        let f: Vec<f64> = grid.features().row_iter().map(|x| probe.truth.eval(x)).collect();
        let inside: Vec<bool> = grid.features().row_iter().map(FunctionProbe::is_interpolation).collect();
        for (k, (label, est)) in self.plan.estimators.iter().enumerate() {
            let EstimatorPlan::Model { base } = est else { unreachable!() };
            let ctx = self.ctx(seed, k, Task::Regression, Some(oracle.clone()));
            let res = (|| make_predictor(*base, &ctx)?.fit(&probe.train)?.predict_mean(&grid.without_labels()))();
            match res {
                Ok(pred) => {
                    let part = |keep: bool| {
                        let (a, b): (Vec<f64>, Vec<f64>) =
                            pred.iter().zip(&f).zip(&inside).filter(|(_, &i)| i == keep).map(|((p, t), _)| (*p, *t)).unzip();
                        mse(&a, &b)
                    };
                    if self.plan.wants(Metric::TestMse) {
                        emit.put(label, Metric::TestMse, mse(&pred, &f));
                    }
                    if self.plan.wants(Metric::InterpMse) {
                        emit.put(label, Metric::InterpMse, part(true));
                    }
                    if self.plan.wants(Metric::ExtrapMse) {
                        emit.put(label, Metric::ExtrapMse, part(false));
                    }
                }
                Err(e) => emit.fail(label, e),
            }
        }
        Ok(())
    }
}

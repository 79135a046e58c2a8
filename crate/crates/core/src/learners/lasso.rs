//! LASSO by cyclic coordinate descent with a cross-validated penalty.
//!
//! Features are centered and scaled to unit mean square on the training rows,
//! the response is centered, and the objective is
//! `(1/2n)‖y − Xβ‖² + λ‖β‖₁`. The intercept is recovered afterwards and is
//! never penalized.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{fold_assignment, fold_split, FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{derive_seed, stream};

pub const LASSO_GRID_SIZE: usize = 100;
pub const LASSO_GRID_RATIO: f64 = 1e-3;
pub const KKT_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 100_000;

/// Training-row statistics used to standardize features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Root mean square of the centered column (divisor `n`).
    pub scales: Vec<f64>,
    /// Non-constant columns, in order; only these enter the fit.
    pub kept: Vec<usize>,
    pub y_mean: f64,
}

impl Standardization {
    pub fn fit(x: &Matrix, y: &[f64]) -> Self {
        let n = x.rows() as f64;
        let p = x.cols();
        let mut means = vec![0.0; p];
        let mut scales = vec![0.0; p];
        let mut kept = Vec::new();
        for j in 0..p {
            let col = x.col(j);
            let m = col.iter().sum::<f64>() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            means[j] = m;
            scales[j] = s;
            if s > 1e-12 * m.abs().max(1.0) {
                kept.push(j);
            }
        }
        Standardization { means, scales, kept, y_mean: y.iter().sum::<f64>() / n }
    }

    /// Standardized kept columns, each of length `n`.
    pub fn columns(&self, x: &Matrix) -> Vec<Vec<f64>> {
        self.kept
            .iter()
            .map(|&j| x.col(j).iter().map(|v| (v - self.means[j]) / self.scales[j]).collect())
            .collect()
    }

    pub fn center(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v - self.y_mean).collect()
    }

    /// Intercept and full-length coefficient vector on the original scale.
    pub fn to_original(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut coef = vec![0.0; self.means.len()];
        let mut intercept = self.y_mean;
        for (k, &j) in self.kept.iter().enumerate() {
            coef[j] = beta[k] / self.scales[j];
            intercept -= self.means[j] * coef[j];
        }
        (intercept, coef)
    }
}

fn residual(cols: &[Vec<f64>], y: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut r = y.to_vec();
    for (c, &b) in cols.iter().zip(beta) {
        if b != 0.0 {
            r.iter_mut().zip(c).for_each(|(ri, xi)| *ri -= b * xi);
        }
    }
    r
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(cols: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    cols.iter().map(|c| (dot(c, y) / n).abs()).fold(0.0, f64::max)
}

/// `count` log-spaced penalties from `lmax` down to `ratio·lmax`.
pub fn lambda_grid(lmax: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lmax];
    }
    (0..count).map(|k| lmax * ratio.powf(k as f64 / (count - 1) as f64)).collect()
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

pub fn lasso_objective(cols: &[Vec<f64>], y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let r = residual(cols, y, beta);
    dot(&r, &r) / (2.0 * y.len() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the LASSO stationarity conditions at `beta`.
pub fn kkt_violation(cols: &[Vec<f64>], y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let r = residual(cols, y, beta);
    cols.iter()
        .zip(beta)
        .map(|(c, &b)| {
            let g = dot(c, &r) / n;
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent from the warm start in `beta`. Columns must have unit
/// mean square. When `trace` is given the objective after every sweep is
/// appended to it. Returns the number of sweeps.
pub fn coordinate_descent(
    cols: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    beta: &mut [f64],
    mut trace: Option<&mut Vec<f64>>,
) -> Result<usize> {
    let n = y.len() as f64;
    let mut r = residual(cols, y, beta);
    for sweep in 1..=MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for (j, c) in cols.iter().enumerate() {
            let old = beta[j];
            let z = dot(c, &r) / n + old;
            let new = soft_threshold(z, lambda);
            if new != old {
                let delta = new - old;
                r.iter_mut().zip(c).for_each(|(ri, xi)| *ri -= delta * xi);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(dot(&r, &r) / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>());
        }
        if max_change < 1e-10 {
            r = residual(cols, y, beta);
            if max_change == 0.0 || kkt_violation(cols, y, beta, lambda) < 1e-9 {
                return Ok(sweep);
            }
        }
    }
    Err(Error::NoConvergence { iterations: MAX_SWEEPS, grad_norm: kkt_violation(cols, y, beta, lambda) })
}

/// Warm-started solutions along `lambdas` (standardized scale).
pub fn lasso_path(cols: &[Vec<f64>], y: &[f64], lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut beta = vec![0.0; cols.len()];
    let mut path = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        coordinate_descent(cols, y, l, &mut beta, None)?;
        path.push(beta.clone());
    }
    Ok(path)
}

/// One cross-validation fold's standardization and coefficient path.
#[derive(Debug, Clone)]
pub struct LassoFold {
    pub standardization: Standardization,
    pub path: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LassoModel {
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub chosen_index: usize,
    pub intercept: f64,
    /// Coefficients on the original feature scale.
    pub coef: Vec<f64>,
    pub standardization: Standardization,
    /// Full-data path on the standardized scale.
    pub path: Vec<Vec<f64>>,
    pub fold_assignment: Vec<usize>,
    pub fold_seed: u64,
    pub folds: Vec<LassoFold>,
    pub warnings: Vec<String>,
}

impl LassoModel {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen_index]
    }

    pub fn predict_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len(), got: x.cols() });
        }
        Ok(x.row_iter().map(|r| self.intercept + dot(r, &self.coef)).collect())
    }
}

impl FittedModel for LassoModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::point(self.predict_values(query.features())?))
    }
}

pub fn fit_lasso_cv(train: &Dataset, folds: usize, seed: u64) -> Result<LassoModel> {
    let n = train.n();
    if folds < 2 {
        return Err(invalid("LASSO CV needs at least two folds"));
    }
    if n < folds {
        return Err(invalid(format!("n = {n} is smaller than the fold count {folds}")));
    }
    let y = train.require_labels()?;
    let x = train.features();
    let standardization = Standardization::fit(x, y);
    let mut warnings = Vec::new();
    for j in 0..x.cols() {
        if !standardization.kept.contains(&j) {
            warnings.push(format!("feature x{} is constant and was dropped", j + 1));
        }
    }
    if standardization.kept.is_empty() {
        return Err(Error::InvalidData("every feature column is constant".into()));
    }
    let cols = standardization.columns(x);
    let yc = standardization.center(y);
    let lambdas = lambda_grid(lambda_max(&cols, &yc), LASSO_GRID_SIZE, LASSO_GRID_RATIO);
    let path = lasso_path(&cols, &yc, &lambdas)?;

    let fold_seed = derive_seed(seed, stream::SPLIT);
    let assignment = fold_assignment(n, folds, fold_seed);
    let mut sq_err = vec![0.0; lambdas.len()];
    let mut fold_fits = Vec::with_capacity(folds);
    for k in 0..folds {
        let (tr, va) = fold_split(&assignment, k);
        let xt = train.select_rows(&tr);
        let yt = xt.require_labels()?;
        let st = Standardization::fit(xt.features(), yt);
        let fcols = st.columns(xt.features());
        let fpath = lasso_path(&fcols, &st.center(yt), &lambdas)?;
        for (l, beta) in fpath.iter().enumerate() {
            let (b0, coef) = st.to_original(beta);
            for &i in &va {
                let e = y[i] - b0 - dot(x.row(i), &coef);
                sq_err[l] += e * e;
            }
        }
        fold_fits.push(LassoFold { standardization: st, path: fpath });
    }
    let cv_error: Vec<f64> = sq_err.iter().map(|s| s / n as f64).collect();
    let chosen_index = (0..cv_error.len()).fold(0, |b, i| if cv_error[i] < cv_error[b] { i } else { b });
    let (intercept, coef) = standardization.to_original(&path[chosen_index]);
    Ok(LassoModel {
        lambdas,
        cv_error,
        chosen_index,
        intercept,
        coef,
        standardization,
        path,
        fold_assignment: assignment,
        fold_seed,
        folds: fold_fits,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LassoPredictor {
    pub folds: usize,
    pub seed: u64,
}

impl Predictor for LassoPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_lasso_cv(train, self.folds, self.seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = x.row_iter().map(|r| 2.0 * r[0] - r[1] + 0.3 * rng.random_range(-1.0..1.0)).collect();
        let st = Standardization::fit(&x, &y);
        (st.columns(&x), st.center(&y))
    }

    #[test]
    fn zero_at_lambda_max() {
        let (cols, y) = random_problem(1, 60, 8);
        let lmax = lambda_max(&cols, &y);
        for l in [lmax, 2.0 * lmax] {
            let mut b = vec![0.3; cols.len()];
            coordinate_descent(&cols, &y, l, &mut b, None).unwrap();
            assert!(b.iter().all(|v| *v == 0.0));
        }
        let mut b = vec![0.0; cols.len()];
        coordinate_descent(&cols, &y, 0.9 * lmax, &mut b, None).unwrap();
        assert!(b.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // columns of a scaled Hadamard-like design: orthogonal, unit mean square
        let n = 8;
        let cols: Vec<Vec<f64>> = vec![
            vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
        ];
        let y = vec![3.0, -1.0, 0.5, 2.0, -0.7, 1.1, 0.0, -2.0];
        let lambda = 0.2;
        let mut b = vec![0.0; 3];
        coordinate_descent(&cols, &y, lambda, &mut b, None).unwrap();
        for j in 0..3 {
            let z = dot(&cols[j], &y) / n as f64;
            assert!((b[j] - soft_threshold(z, lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn objective_never_increases() {
        let (cols, y) = random_problem(3, 80, 12);
        let lmax = lambda_max(&cols, &y);
        let mut b = vec![0.0; cols.len()];
        let mut trace = Vec::new();
        coordinate_descent(&cols, &y, 0.01 * lmax, &mut b, Some(&mut trace)).unwrap();
        let start = lasso_objective(&cols, &y, &vec![0.0; cols.len()], 0.01 * lmax);
        assert!(trace[0] <= start);
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-14 * w[0].abs()));
        assert!(kkt_violation(&cols, &y, &b, 0.01 * lmax) < KKT_TOL);
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0, LASSO_GRID_SIZE, LASSO_GRID_RATIO);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cv_recovers_noiseless_single_feature() {
        let mut rng = rng_from_seed(5);
        let x = Matrix::from_fn(200, 5, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = x.row_iter().map(|r| r[0]).collect();
        let d = Dataset::labeled(x, y).unwrap();
        let m = fit_lasso_cv(&d, 5, 0).unwrap();
        let xt = Matrix::from_fn(100, 5, |_, _| rng.random_range(-1.0..1.0));
        let yt: Vec<f64> = xt.row_iter().map(|r| r[0]).collect();
        let pred = m.predict_values(&xt).unwrap();
        let mean = yt.iter().sum::<f64>() / 100.0;
        let sse: f64 = pred.iter().zip(&yt).map(|(a, b)| (a - b) * (a - b)).sum();
        let sst: f64 = yt.iter().map(|b| (b - mean) * (b - mean)).sum();
        assert!(1.0 - sse / sst > 0.999);
    }

    #[test]
    fn constant_column_is_dropped_with_warning() {
        let mut rng = rng_from_seed(6);
        let x = Matrix::from_fn(50, 3, |_, j| if j == 1 { 4.0 } else { rng.random_range(-1.0..1.0) });
        let y: Vec<f64> = x.row_iter().map(|r| r[0] + r[2]).collect();
        let m = fit_lasso_cv(&Dataset::labeled(x, y).unwrap(), 5, 0).unwrap();
        assert_eq!(m.coef[1], 0.0);
        assert_eq!(m.warnings.len(), 1);
        let tiny = Dataset::from_rows(&[vec![1.0], vec![2.0]], Some(vec![1.0, 2.0])).unwrap();
        assert!(fit_lasso_cv(&tiny, 5, 0).is_err());
    }
}

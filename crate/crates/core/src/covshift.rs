//! Model selection and baselines under covariate shift.
//!
//! Pseudo-labeling (PL) splits the source sample in half: a KRR imputer fitted
//! on the first half labels the auxiliary target covariates, and the KRR
//! candidate (one per λ, fitted on the second half) with the smallest error
//! against those labels is selected. The oracle variant uses the true mean
//! in place of the imputed labels.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::gbrt::{fit_gbrt, GbrtGrid, GbrtModel};
use crate::learners::kernel::median_heuristic;
use crate::learners::krr::{fit_krr, KrrKernel, KrrModel};
use crate::learners::{fold_assignment, FittedModel};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::synthgen::CovShiftBundle;

pub const DEFAULT_GRID_SIZE: usize = 20;
pub const IMPUTER_FOLDS: usize = 5;
pub const BASELINE_FOLDS: usize = 5;

/// `size` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return alloc::vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..size).map(|i| (a + (b - a) * i as f64 / (size - 1) as f64).exp()).collect()
}

/// 20 log-spaced values in `[1e-6, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 1e2, DEFAULT_GRID_SIZE)
}

/// Outcome of a PL or oracle selection.
#[derive(Debug, Clone)]
pub struct PlSelection {
    pub lambda_grid: Vec<f64>,
    /// Source rows of the imputer half and the candidate half.
    pub split: (Vec<usize>, Vec<usize>),
    /// KRR fitted on the first half (PL only).
    pub imputer_fit: Option<KrrModel>,
    /// CV error per grid λ used to tune the imputer (PL only).
    pub imputer_cv: Vec<f64>,
    /// Labels the candidates were scored against on the auxiliary set.
    pub aux_labels: Vec<f64>,
    pub candidates: Vec<KrrModel>,
    pub selection_scores: Vec<f64>,
    /// Mean squared distance of each candidate from the true mean on the auxiliary set.
    pub true_aux_risk: Vec<f64>,
    pub chosen_index: usize,
}

impl PlSelection {
    pub fn chosen(&self) -> &KrrModel {
        &self.candidates[self.chosen_index]
    }

    pub fn chosen_lambda(&self) -> f64 {
        self.lambda_grid[self.chosen_index]
    }

    /// `(λ, score, true aux risk)` rows.
    pub fn trace(&self) -> Vec<(f64, f64, f64)> {
        (0..self.lambda_grid.len()).map(|i| (self.lambda_grid[i], self.selection_scores[i], self.true_aux_risk[i])).collect()
    }
}

/// Index of the smallest score; ties go to the smaller λ.
pub fn select_index(scores: &[f64], lambdas: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] || (scores[i] == scores[best] && lambdas[i] < lambdas[best]) {
            best = i;
        }
    }
    best
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Freeze a median-heuristic kernel on the pooled source covariates.
fn resolve_kernel(kernel: KrrKernel, source: &Dataset) -> Result<KrrKernel> {
    Ok(match kernel {
        KrrKernel::MedianRbf => KrrKernel::Rbf { lengthscale: median_heuristic(source.features())? },
        k => k,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("the λ grid needs at least two values"));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(invalid("λ values must be positive and finite"));
    }
    Ok(())
}

/// Seeded random halves of the source rows; the first half gets `⌊n/2⌋` rows.
pub fn half_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, stream::SPLIT)));
    let second = order.split_off(n / 2);
    (order, second)
}

/// Pooled K-fold CV squared error of KRR for each λ.
fn krr_cv(train: &Dataset, kernel: KrrKernel, grid: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = train.n();
    let folds = IMPUTER_FOLDS.min(n);
    let assign = fold_assignment(n, folds, seed);
    let y = train.require_labels()?;
    let mut err = alloc::vec![0.0; grid.len()];
    for f in 0..folds {
        let (fit_idx, held): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assign[i] != f);
        let fit_set = train.select_rows(&fit_idx);
        let held_x = train.select_rows(&held);
        for (k, &lambda) in grid.iter().enumerate() {
            let pred = fit_krr(&fit_set, kernel, lambda)?.predict_values(held_x.features())?;
            err[k] += held.iter().zip(&pred).map(|(&i, p)| (y[i] - p) * (y[i] - p)).sum::<f64>();
        }
    }
    Ok(err.into_iter().map(|e| e / n as f64).collect())
}

fn select(bundle: &CovShiftBundle, grid: &[f64], kernel: KrrKernel, seed: u64, oracle: bool) -> Result<PlSelection> {
    check_grid(grid)?;
    let source = &bundle.source;
    if source.n() < 4 {
        return Err(invalid("PL selection needs at least 4 source rows"));
    }
    let kernel = resolve_kernel(kernel, source)?;
    let (first, second) = half_split(source.n(), seed);
    let aux = bundle.target_aux.features();
    let truth: Vec<f64> = aux.row_iter().map(|x| bundle.true_mean(x[0])).collect();
    let (imputer_fit, imputer_cv, aux_labels) = if oracle {
        (None, Vec::new(), truth.clone())
    } else {
        let half = source.select_rows(&first);
        let cv = krr_cv(&half, kernel, grid, derive_seed(seed, stream::FIT))?;
        let lambda = grid[select_index(&cv, grid)];
        let imputer = fit_krr(&half, kernel, lambda)?;
        let labels = imputer.predict_values(aux)?;
        (Some(imputer), cv, labels)
    };
    let half2 = source.select_rows(&second);
    let mut candidates = Vec::with_capacity(grid.len());
    let mut scores = Vec::with_capacity(grid.len());
    let mut risks = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = fit_krr(&half2, kernel, lambda)?;
        let pred = model.predict_values(aux)?;
        scores.push(mse(&pred, &aux_labels));
        risks.push(mse(&pred, &truth));
        candidates.push(model);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Singular(format!("non-finite selection score for grid {grid:?}")));
    }
    let chosen_index = select_index(&scores, grid);
    Ok(PlSelection {
        lambda_grid: grid.to_vec(),
        split: (first, second),
        imputer_fit,
        imputer_cv,
        aux_labels,
        candidates,
        selection_scores: scores,
        true_aux_risk: risks,
        chosen_index,
    })
}

/// Pseudo-labeling selection of the KRR penalty. The imputer's own λ is
/// chosen from the same grid by 5-fold CV on the first half.
pub fn pl_select(bundle: &CovShiftBundle, lambda_grid: &[f64], kernel: KrrKernel, seed: u64) -> Result<PlSelection> {
    select(bundle, lambda_grid, kernel, seed, false)
}

/// As [`pl_select`], scoring candidates against the true mean.
pub fn wang_oracle_select(bundle: &CovShiftBundle, lambda_grid: &[f64], kernel: KrrKernel, seed: u64) -> Result<PlSelection> {
    select(bundle, lambda_grid, kernel, seed, true)
}

/// Unweighted boosting on the source sample, tuned by 5-fold CV.
pub fn naive_fit(bundle: &CovShiftBundle, seed: u64) -> Result<GbrtModel> {
    fit_gbrt(&bundle.source, None, &GbrtGrid::default(), BASELINE_FOLDS, seed)
}

/// True density ratio at every source row.
pub fn iw_weights(bundle: &CovShiftBundle) -> Vec<f64> {
    bundle.source.features().row_iter().map(|x| bundle.true_density_ratio(x[0])).collect()
}

/// Boosting with the loss weighted by the true density ratio.
pub fn iw_fit(bundle: &CovShiftBundle, seed: u64) -> Result<GbrtModel> {
    fit_gbrt(&bundle.source, Some(&iw_weights(bundle)), &GbrtGrid::default(), BASELINE_FOLDS, seed)
}

/// Prediction MSE on the labeled target test set.
pub fn covshift_mse(model: &dyn FittedModel, bundle: &CovShiftBundle) -> Result<f64> {
    let y = bundle.target_test.require_labels()?;
    let pred = model.predict_mean(&bundle.target_test.without_labels())?;
    Ok(mse(&pred, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::FunctionModel;
    use crate::synthgen::{gen_covshift, MeanFunction};

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-6).abs() < 1e-18 && (g[19] - 1e2).abs() < 1e-10);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ties_prefer_smaller_lambda() {
        assert_eq!(select_index(&[1.0, 0.5, 0.5], &[1.0, 3.0, 2.0]), 2);
        assert_eq!(select_index(&[0.2, 0.5], &[1.0, 0.1]), 0);
    }

    #[test]
    fn oracle_picks_grid_minimal_risk() {
        let b = gen_covshift(MeanFunction::I, 120, 50, 100, 3).unwrap();
        let grid = log_grid(1e-5, 1.0, 6);
        let s = wang_oracle_select(&b, &grid, KrrKernel::MedianRbf, 4).unwrap();
        let best = s.true_aux_risk.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(s.true_aux_risk[s.chosen_index], best);
        assert!(s.imputer_fit.is_none());
    }

    #[test]
    fn pl_is_deterministic_and_uses_halves() {
        let b = gen_covshift(MeanFunction::II, 81, 20, 40, 1).unwrap();
        let grid = log_grid(1e-4, 1e1, 5);
        let a = pl_select(&b, &grid, KrrKernel::MedianRbf, 9).unwrap();
        let c = pl_select(&b, &grid, KrrKernel::MedianRbf, 9).unwrap();
        assert_eq!(a.selection_scores, c.selection_scores);
        assert_eq!(a.split.0.len(), 40);
        assert_eq!(a.split.1.len(), 41);
        let o = wang_oracle_select(&b, &grid, KrrKernel::MedianRbf, 9).unwrap();
        assert_eq!(o.split, a.split);
        assert!(a.imputer_fit.is_some());
        assert_eq!(a.imputer_cv.len(), 5);
    }

    #[test]
    fn rejects_tiny_inputs() {
        let b = gen_covshift(MeanFunction::I, 3, 5, 5, 0).unwrap();
        assert!(pl_select(&b, &[0.1, 1.0], KrrKernel::MedianRbf, 0).is_err());
        let b = gen_covshift(MeanFunction::I, 10, 5, 5, 0).unwrap();
        assert!(pl_select(&b, &[0.1], KrrKernel::MedianRbf, 0).is_err());
    }

    #[test]
    fn iw_weights_take_two_values() {
        let b = gen_covshift(MeanFunction::III, 200, 5, 5, 2).unwrap();
        let w = iw_weights(&b);
        assert!(w.iter().all(|&v| (v - 0.2).abs() < 1e-12 || (v - 5.0).abs() < 1e-12));
        for (x, v) in b.source.features().row_iter().zip(&w) {
            if x[0] > 0.5 {
                assert!((v - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mse_of_shifted_truth() {
        let b = gen_covshift(MeanFunction::V, 5, 10_000, 5, 8).unwrap();
        let f = b.mean_fn;
        let exact = covshift_mse(&FunctionModel(move |x: &[f64]| f.eval(x[0])), &b).unwrap();
        let shifted = covshift_mse(&FunctionModel(move |x: &[f64]| f.eval(x[0]) + 1.0), &b).unwrap();
        let se = (2.0f64 / 10_000.0).sqrt();
        assert!((exact - 1.0).abs() < 4.0 * se, "{exact}");
        assert!((shifted - 2.0).abs() < 4.0 * 2.0 * se, "{shifted}");
    }
}

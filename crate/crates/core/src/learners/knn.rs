//! k-nearest-neighbor classification with a cross-validated `k`.
//!
//! Neighbors are ranked by Euclidean distance, with equal distances broken by
//! training-row order. A vote that splits evenly goes to class 1.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{binary_labels, fold_assignment, fold_split, Classifier, FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::rng::{derive_seed, stream};

pub const KNN_GRID_POINTS: usize = 10;

/// Ten equally spaced integers from `⌊n^¼⌋` to `⌊n^¾⌋`, rounded and deduplicated.
pub fn knn_grid(n: usize) -> Result<Vec<usize>> {
    if n < 10 {
        return Err(invalid("kNN needs n >= 10 to build its k grid"));
    }
    let nf = n as f64;
    let lo = (nf.powf(0.25) + 1e-9).floor();
    let hi = (nf.powf(0.75) + 1e-9).floor();
    let mut grid: Vec<usize> = (0..KNN_GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (KNN_GRID_POINTS - 1) as f64).round() as usize)
        .collect();
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    train_x: Matrix,
    labels: Vec<bool>,
    /// `(k, CV accuracy)` over the grid; empty for a fixed-`k` fit.
    pub cv_accuracy: Vec<(usize, f64)>,
}

/// Training rows ordered from nearest to farthest.
fn neighbor_order(train: &Matrix, rows: &[usize], q: &[f64]) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = rows.iter().map(|&i| (squared_distance(train.row(i), q), i)).collect();
    d.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

fn vote(ones: usize, k: usize) -> bool {
    2 * ones >= k
}

pub fn fit_knn(train: &Dataset, k: usize) -> Result<KnnModel> {
    let labels = binary_labels(train.require_labels()?)?;
    if k == 0 || k > train.n() {
        return Err(invalid("k must lie in [1, n]"));
    }
    Ok(KnnModel { k, train_x: train.features().clone(), labels, cv_accuracy: Vec::new() })
}

pub fn fit_knn_cv(train: &Dataset, folds: usize, seed: u64) -> Result<KnnModel> {
    let n = train.n();
    let grid = knn_grid(n)?;
    if folds < 2 || folds > n {
        return Err(invalid("kNN CV needs 2 <= folds <= n"));
    }
    let labels = binary_labels(train.require_labels()?)?;
    let x = train.features();
    let assignment = fold_assignment(n, folds, derive_seed(seed, stream::SPLIT));
    let mut correct = vec![0usize; grid.len()];
    for f in 0..folds {
        let (tr, va) = fold_split(&assignment, f);
        let kmax = grid.iter().copied().filter(|&k| k <= tr.len()).max().unwrap_or(0);
        for &i in &va {
            let order = neighbor_order(x, &tr, x.row(i));
            let mut ones = 0;
            let mut g = 0;
            for (rank, &(_, j)) in order.iter().take(kmax).enumerate() {
                ones += labels[j] as usize;
                while g < grid.len() && grid[g] == rank + 1 {
                    correct[g] += (vote(ones, grid[g]) == labels[i]) as usize;
                    g += 1;
                }
            }
        }
    }
    let cv_accuracy: Vec<(usize, f64)> = grid.iter().zip(&correct).map(|(&k, &c)| (k, c as f64 / n as f64)).collect();
    let chosen = (0..cv_accuracy.len()).fold(0, |b, i| if cv_accuracy[i].1 > cv_accuracy[b].1 { i } else { b });
    let mut model = fit_knn(train, cv_accuracy[chosen].0)?;
    model.cv_accuracy = cv_accuracy;
    Ok(model)
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    fn ones_among_neighbors(&self, q: &[f64]) -> usize {
        let rows: Vec<usize> = (0..self.train_x.rows()).collect();
        neighbor_order(&self.train_x, &rows, q).iter().take(self.k).filter(|(_, j)| self.labels[*j]).count()
    }

    fn check(&self, query: &Dataset) -> Result<()> {
        if query.p() != self.train_x.cols() {
            return Err(Error::DimensionMismatch { expected: self.train_x.cols(), got: query.p() });
        }
        Ok(())
    }
}

impl Classifier for KnnModel {
    fn classify(&self, query: &Dataset) -> Result<Vec<f64>> {
        self.check(query)?;
        Ok(query
            .features()
            .row_iter()
            .map(|q| if vote(self.ones_among_neighbors(q), self.k) { 1.0 } else { 0.0 })
            .collect())
    }
}

impl FittedModel for KnnModel {
    /// Class-1 share among the `k` nearest neighbors.
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        self.check(query)?;
        let p = query.features().row_iter().map(|q| self.ones_among_neighbors(q) as f64 / self.k as f64).collect();
        Ok(PredictiveDistribution::point(p))
    }
}

pub fn knn_classify(model: &KnnModel, query: &Dataset) -> Result<Vec<f64>> {
    model.classify(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnPredictor {
    pub folds: usize,
    pub seed: u64,
}

impl Predictor for KnnPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_knn_cv(train, self.folds, self.seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = knn_grid(300).unwrap();
        assert_eq!(g.first(), Some(&4));
        assert_eq!(g.last(), Some(&72));
        assert_eq!(g.len(), 10);
        assert_eq!(knn_grid(10).unwrap(), vec![1, 2, 3, 4, 5]);
        // exact fourth power must not be floored down by rounding error
        assert_eq!(knn_grid(10_000).unwrap()[0], 10);
        assert_eq!(*knn_grid(10_000).unwrap().last().unwrap(), 1000);
        assert!(knn_grid(9).is_err());
    }

    #[test]
    fn one_nn_returns_own_label() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let d = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let m = fit_knn(&d, 1).unwrap();
        assert_eq!(m.classify(&d.without_labels()).unwrap(), y);
    }

    #[test]
    fn separated_clusters() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            rows.push(vec![-10.0 - i as f64 * 0.1, 0.0]);
            y.push(0.0);
            rows.push(vec![10.0 + i as f64 * 0.1, 0.0]);
            y.push(1.0);
        }
        let d = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let m = fit_knn_cv(&d, 5, 0).unwrap();
        assert!(m.cv_accuracy.iter().all(|&(_, a)| a == 1.0));
        assert_eq!(m.k(), m.cv_accuracy[0].0);
        assert_eq!(m.classify(&d.without_labels()).unwrap(), y);
    }

    #[test]
    fn even_split_goes_to_one() {
        let d = Dataset::from_rows(&[vec![-1.0], vec![1.0]], Some(vec![0.0, 1.0])).unwrap();
        let m = fit_knn(&d, 2).unwrap();
        assert_eq!(m.classify(&Dataset::from_rows(&[vec![-5.0]], None).unwrap()).unwrap(), vec![1.0]);
    }
}

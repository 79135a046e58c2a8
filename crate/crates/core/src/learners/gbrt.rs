//! Gradient-boosted regression trees for squared error with sample weights.
//!
//! Each tree is grown level by level to a fixed depth on the current
//! residuals. A split maximizes `S_L²/W_L + S_R²/W_R − S²/W`, where `S` and
//! `W` are the weighted residual sum and the weight total of a node, and a
//! leaf predicts `S/W`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_weights, fold_assignment, fold_split, FittedModel, PredictiveDistribution, Predictor, WeightedRegressor};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbrtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbrtGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for GbrtGrid {
    fn default() -> Self {
        GbrtGrid { n_trees: vec![100, 300], max_depth: vec![2, 3], learning_rate: vec![0.05, 0.1] }
    }
}

impl GbrtGrid {
    pub fn single(params: GbrtParams) -> Self {
        GbrtGrid { n_trees: vec![params.n_trees], max_depth: vec![params.max_depth], learning_rate: vec![params.learning_rate] }
    }

    /// Every combination, trees outermost and rate innermost.
    pub fn combinations(&self) -> Vec<GbrtParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &learning_rate in &self.learning_rate {
                    out.push(GbrtParams { n_trees, max_depth, learning_rate });
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees.is_empty() || self.max_depth.is_empty() || self.learning_rate.is_empty() {
            return Err(invalid("GBRT grid has an empty axis"));
        }
        if self.n_trees.contains(&0) || self.max_depth.contains(&0) {
            return Err(invalid("GBRT trees and depth must be >= 1"));
        }
        if self.learning_rate.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(invalid("GBRT learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Row indices sorted by each feature (ties by index), restricted to `rows`.
fn presort(x: &Matrix, rows: &[usize]) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|f| {
            let mut o = rows.to_vec();
            o.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
            o
        })
        .collect()
}

const MIN_RELATIVE_GAIN: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grow one tree on `resid` over `rows`; `node_of` receives each row's leaf.
fn grow_tree(
    x: &Matrix,
    orders: &[Vec<usize>],
    rows: &[usize],
    resid: &[f64],
    w: &[f64],
    max_depth: usize,
    node_of: &mut [usize],
) -> RegressionTree {
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut s = vec![0.0];
    let mut wt = vec![0.0];
    for &i in rows {
        node_of[i] = 0;
        s[0] += w[i] * resid[i];
        wt[0] += w[i];
    }
    let mut frontier = vec![0usize];
    for _ in 0..max_depth {
        let count = nodes.len();
        let mut in_frontier = vec![false; count];
        frontier.iter().for_each(|&nd| in_frontier[nd] = true);
        let mut best: Vec<Option<Best>> = vec![None; count];
        let mut sl = vec![0.0; count];
        let mut wl = vec![0.0; count];
        let mut prev: Vec<Option<f64>> = vec![None; count];
        for (f, order) in orders.iter().enumerate() {
            for &nd in &frontier {
                sl[nd] = 0.0;
                wl[nd] = 0.0;
                prev[nd] = None;
            }
            for &i in order {
                let nd = node_of[i];
                if !in_frontier[nd] {
                    continue;
                }
                let xi = x[(i, f)];
                if let Some(px) = prev[nd] {
                    if xi > px {
                        let (a, b) = (sl[nd], wl[nd]);
                        let parts = a * a / b + (s[nd] - a) * (s[nd] - a) / (wt[nd] - b);
                        let gain = parts - s[nd] * s[nd] / wt[nd];
                        // gains at rounding level are not splits, and near-equal gains keep the earlier candidate
                        if gain > MIN_RELATIVE_GAIN * parts && gain > best[nd].map_or(0.0, |bb| bb.gain * (1.0 + MIN_RELATIVE_GAIN)) {
                            best[nd] = Some(Best { gain, feature: f, threshold: 0.5 * (px + xi) });
                        }
                    }
                }
                sl[nd] += w[i] * resid[i];
                wl[nd] += w[i];
                prev[nd] = Some(xi);
            }
        }
        let mut next = Vec::new();
        let mut split_children = vec![None; count];
        for &nd in &frontier {
            if let Some(b) = best[nd] {
                let left = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                s.extend([0.0, 0.0]);
                wt.extend([0.0, 0.0]);
                nodes[nd] = Node::Split { feature: b.feature, threshold: b.threshold, left, right: left + 1 };
                split_children[nd] = Some((b.feature, b.threshold, left));
                next.extend([left, left + 1]);
            }
        }
        if next.is_empty() {
            break;
        }
        for &i in rows {
            if let Some((f, t, left)) = split_children[node_of[i]] {
                let child = if x[(i, f)] <= t { left } else { left + 1 };
                node_of[i] = child;
                s[child] += w[i] * resid[i];
                wt[child] += w[i];
            }
        }
        frontier = next;
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf(v) = node {
            *v = s[k] / wt[k];
        }
    }
    RegressionTree { nodes }
}

#[derive(Debug, Clone)]
pub struct GbrtModel {
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub params: GbrtParams,
    pub weighted: bool,
    /// Weighted CV mean squared error per grid combination (empty for fixed fits).
    pub cv_scores: Vec<(GbrtParams, f64)>,
}

impl GbrtModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| acc + self.params.learning_rate * t.predict_row(x))
    }

    pub fn predict_values(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

impl FittedModel for GbrtModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::point(self.predict_values(query.features())))
    }
}

/// Boost `n_trees` trees on `rows`, calling `stage` after every tree.
fn boost(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    rows: &[usize],
    max_depth: usize,
    rate: f64,
    n_trees: usize,
    mut stage: impl FnMut(usize, &RegressionTree),
) -> (f64, Vec<RegressionTree>) {
    let orders = presort(x, rows);
    let wsum: f64 = rows.iter().map(|&i| w[i]).sum();
    let base = rows.iter().map(|&i| w[i] * y[i]).sum::<f64>() / wsum;
    let mut fitted = vec![base; x.rows()];
    let mut resid = vec![0.0; x.rows()];
    let mut node_of = vec![0usize; x.rows()];
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        for &i in rows {
            resid[i] = y[i] - fitted[i];
        }
        let tree = grow_tree(x, &orders, rows, &resid, w, max_depth, &mut node_of);
        for &i in rows {
            if let Node::Leaf(v) = tree.nodes[node_of[i]] {
                fitted[i] += rate * v;
            }
        }
        stage(t + 1, &tree);
        trees.push(tree);
    }
    (base, trees)
}

fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<(Vec<f64>, bool)> {
    match weights {
        Some(w) => {
            check_weights(w, n)?;
            Ok((w.to_vec(), true))
        }
        None => Ok((vec![1.0; n], false)),
    }
}

/// Fit one hyperparameter combination without cross-validation.
pub fn fit_gbrt_fixed(train: &Dataset, weights: Option<&[f64]>, params: GbrtParams) -> Result<GbrtModel> {
    GbrtGrid::single(params).validate()?;
    let y = train.require_labels()?;
    let (w, weighted) = resolve_weights(train.n(), weights)?;
    let rows: Vec<usize> = (0..train.n()).collect();
    let (base_score, trees) =
        boost(train.features(), y, &w, &rows, params.max_depth, params.learning_rate, params.n_trees, |_, _| {});
    Ok(GbrtModel { base_score, trees, params, weighted, cv_scores: Vec::new() })
}

/// Choose the grid combination with the smallest weighted `folds`-fold CV
/// error, then refit on all rows.
pub fn fit_gbrt(train: &Dataset, weights: Option<&[f64]>, grid: &GbrtGrid, folds: usize, seed: u64) -> Result<GbrtModel> {
    grid.validate()?;
    let combos = grid.combinations();
    if combos.len() == 1 {
        return fit_gbrt_fixed(train, weights, combos[0]);
    }
    let n = train.n();
    if folds < 2 || n < folds {
        return Err(invalid("GBRT CV needs 2 <= folds <= n"));
    }
    let y = train.require_labels()?;
    let x = train.features();
    let (w, _) = resolve_weights(n, weights)?;
    let assignment = fold_assignment(n, folds, derive_seed(seed, stream::SPLIT));
    let max_trees = *grid.n_trees.iter().max().expect("nonempty");
    let mut err = vec![0.0; combos.len()];
    for k in 0..folds {
        let (tr, va) = fold_split(&assignment, k);
        for &depth in &grid.max_depth {
            for &rate in &grid.learning_rate {
                let mut pred = vec![0.0; va.len()];
                let mut staged: Vec<Option<Vec<f64>>> = vec![None; max_trees + 1];
                let (base, _) = boost(x, y, &w, &tr, depth, rate, max_trees, |t, tree| {
                    for (slot, &i) in pred.iter_mut().zip(&va) {
                        *slot += rate * tree.predict_row(x.row(i));
                    }
                    if grid.n_trees.contains(&t) {
                        staged[t] = Some(pred.clone());
                    }
                });
                for (c, params) in combos.iter().enumerate() {
                    if params.max_depth != depth || params.learning_rate != rate {
                        continue;
                    }
                    let stage = staged[params.n_trees].as_ref().expect("staged");
                    err[c] += va.iter().zip(stage).map(|(&i, p)| w[i] * (y[i] - base - p).powi(2)).sum::<f64>();
                }
            }
        }
    }
    let wsum: f64 = w.iter().sum();
    let cv_scores: Vec<(GbrtParams, f64)> = combos.iter().copied().zip(err.iter().map(|e| e / wsum)).collect();
    let chosen = (0..cv_scores.len()).fold(0, |b, i| if cv_scores[i].1 < cv_scores[b].1 { i } else { b });
    let mut model = fit_gbrt_fixed(train, weights, cv_scores[chosen].0)?;
    model.cv_scores = cv_scores;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbrtPredictor {
    pub grid: GbrtGrid,
    pub folds: usize,
    pub seed: u64,
}

impl GbrtPredictor {
    pub fn new(seed: u64) -> Self {
        GbrtPredictor { grid: GbrtGrid::default(), folds: 5, seed }
    }
}

impl Predictor for GbrtPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_gbrt(train, None, &self.grid, self.folds, self.seed)?))
    }
}

impl WeightedRegressor for GbrtPredictor {
    fn fit_weighted(&self, train: &Dataset, weights: &[f64]) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_gbrt(train, Some(weights), &self.grid, self.folds, self.seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_data(seed: u64, n: usize) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let x = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = x.row_iter().map(|r| r[0] * r[0] + (2.0 * r[1]).sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        Dataset::labeled(x, y).unwrap()
    }

    #[test]
    fn constant_target() {
        let x = Matrix::from_fn(30, 2, |i, j| (i * 7 + j * 3) as f64 % 11.0);
        let d = Dataset::labeled(x, vec![0.37; 30]).unwrap();
        let m = fit_gbrt_fixed(&d, None, GbrtParams { n_trees: 20, max_depth: 3, learning_rate: 0.1 }).unwrap();
        assert!(m.predict_values(d.features()).iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let d = random_data(1, 80);
        let params = GbrtParams { n_trees: 30, max_depth: 3, learning_rate: 0.1 };
        let a = fit_gbrt_fixed(&d, None, params).unwrap();
        let b = fit_gbrt_fixed(&d, Some(&vec![2.5; 80]), params).unwrap();
        for (u, v) in a.predict_values(d.features()).iter().zip(b.predict_values(d.features())) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn step_recovered_by_one_stump() {
        let xs = [-0.9, -0.7, -0.4, -0.2, -0.05, 0.1, 0.3, 0.5, 0.6, 0.95];
        let ys: Vec<f64> = xs.iter().map(|&v| if v > 0.0 { 2.0 } else { -1.0 }).collect();
        let d = Dataset::labeled(Matrix::from_vec(10, 1, xs.to_vec()).unwrap(), ys.clone()).unwrap();
        let m = fit_gbrt_fixed(&d, None, GbrtParams { n_trees: 1, max_depth: 1, learning_rate: 1.0 }).unwrap();
        // brute-force best split: try every gap, minimize the two-sided SSE
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..10 {
            let sse = |s: &[f64]| {
                let m = s.iter().sum::<f64>() / s.len() as f64;
                s.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            };
            let total = sse(&ys[..k]) + sse(&ys[k..]);
            if total < best.0 {
                best = (total, 0.5 * (xs[k - 1] + xs[k]));
            }
        }
        assert_eq!(best.1, 0.5 * (-0.05 + 0.1));
        for (p, y) in m.predict_values(d.features()).iter().zip(&ys) {
            assert!((p - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cv_picks_a_grid_point() {
        let d = random_data(2, 120);
        let m = fit_gbrt(&d, None, &GbrtGrid::default(), 5, 0).unwrap();
        assert_eq!(m.cv_scores.len(), 8);
        let best = m.cv_scores.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert!(m.cv_scores.iter().any(|(p, s)| *p == m.params && *s == best));
        assert!(fit_gbrt(&d, Some(&vec![0.0; 120]), &GbrtGrid::default(), 5, 0).is_err());
    }
}

//! Gaussian process regression with kernel-family and noise-level selection.
//!
//! The prior mean is zero. For each kernel family and each candidate noise
//! variance the kernel hyperparameters maximize the log marginal likelihood;
//! the overall winner is the candidate with the largest optimized value.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;

use super::kernel::{Kernel, KernelFamily};
use super::optim::minimize_box;
use super::{FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, squared_distance, Cholesky, Matrix};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const DEFAULT_NOISE_GRID: [f64; 4] = [0.05, 0.1, 0.15, 0.2];
/// Random restarts per (family, noise) pair, on top of the default start.
pub const GPR_RESTARTS: usize = 5;
const MAX_ITER: usize = 200;

/// Optimized outcome of one (family, noise) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GprCandidate {
    pub family: KernelFamily,
    pub noise: f64,
    pub log_params: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct GprModel {
    kernel: Kernel,
    noise: f64,
    train_x: Matrix,
    chol: Cholesky,
    alpha: Vec<f64>,
    lml: f64,
    jitter: f64,
    candidates: Vec<GprCandidate>,
}

fn pairwise_d2(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = squared_distance(x.row(i), x.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn covariance(kernel: &Kernel, d2: &Matrix, noise: f64) -> Matrix {
    let n = d2.rows();
    let mut k = Matrix::from_fn(n, n, |i, j| kernel.eval_d2(d2[(i, j)], None));
    k.add_diagonal(noise);
    k
}

fn lml_from_chol(chol: &Cholesky, y: &[f64]) -> (f64, Vec<f64>) {
    let alpha = chol.solve(y);
    let n = y.len() as f64;
    let v = -0.5 * dot(y, &alpha) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * PI).ln();
    (v, alpha)
}

fn lml_and_grad(d2: &Matrix, y: &[f64], kernel: &Kernel, noise: f64) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let np = kernel.family.n_params();
    let chol = Cholesky::new(&covariance(kernel, d2, noise))?;
    let (value, alpha) = lml_from_chol(&chol, y);
    let kinv = chol.inverse();
    let mut grad = alloc::vec![0.0; np];
    let mut gk = alloc::vec![0.0; np];
    for i in 0..n {
        for j in 0..=i {
            kernel.eval_d2(d2[(i, j)], Some(&mut gk));
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let mult = if i == j { 0.5 } else { 1.0 };
            for (g, dk) in grad.iter_mut().zip(&gk) {
                *g += mult * w * dk;
            }
        }
    }
    Ok((value, grad))
}

/// Log marginal likelihood of `y` under a zero-mean GP with `kernel` plus
/// `noise`·I, and its gradient with respect to the kernel's log-parameters.
pub fn log_marginal_likelihood(train: &Dataset, kernel: &Kernel, noise: f64) -> Result<(f64, Vec<f64>)> {
    let y = train.require_labels()?;
    lml_and_grad(&pairwise_d2(train.features()), y, kernel, noise)
}

fn check_noise_grid(noise_grid: &[f64]) -> Result<()> {
    if noise_grid.is_empty() {
        return Err(invalid("noise grid is empty"));
    }
    if noise_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(invalid("noise variances must be positive"));
    }
    Ok(())
}

fn random_start<R: Rng>(family: KernelFamily, rng: &mut R) -> Vec<f64> {
    let amp: Vec<usize> = match family {
        KernelFamily::ConstRbfPlusConstMatern => alloc::vec![0, 2],
        _ => alloc::vec![0],
    };
    (0..family.n_params())
        .map(|j| if amp.contains(&j) { rng.random_range(-2.0..2.0) } else { rng.random_range(-3.0..3.0) })
        .collect()
}

impl GprModel {
    /// Condition the GP on `train` with fixed hyperparameters (no search).
    pub fn fit_fixed(train: &Dataset, kernel: Kernel, noise: f64) -> Result<GprModel> {
        check_noise_grid(&[noise])?;
        let y = train.require_labels()?;
        let k = covariance(&kernel, &pairwise_d2(train.features()), noise);
        let (chol, jitter) = Cholesky::with_jitter(&k)?;
        let (lml, alpha) = lml_from_chol(&chol, y);
        if !lml.is_finite() {
            return Err(Error::Predictor("non-finite log marginal likelihood".into()));
        }
        Ok(GprModel { kernel, noise, train_x: train.features().clone(), chol, alpha, lml, jitter, candidates: Vec::new() })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Diagonal jitter that was needed on top of the noise (normally zero).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn candidates(&self) -> &[GprCandidate] {
        &self.candidates
    }

    pub fn dual_coefficients(&self) -> &[f64] {
        &self.alpha
    }
}

/// Search all kernel families over `noise_grid`.
pub fn fit_gpr(train: &Dataset, noise_grid: &[f64], seed: u64) -> Result<GprModel> {
    fit_gpr_with_families(train, &KernelFamily::ALL, noise_grid, seed)
}

pub fn fit_gpr_with_families(
    train: &Dataset,
    families: &[KernelFamily],
    noise_grid: &[f64],
    seed: u64,
) -> Result<GprModel> {
    if train.n() < 2 {
        return Err(invalid("GPR needs at least two training points"));
    }
    if families.is_empty() {
        return Err(invalid("no kernel families to search"));
    }
    check_noise_grid(noise_grid)?;
    let y = train.require_labels()?;
    let d2 = pairwise_d2(train.features());
    let base = derive_seed(seed, stream::FIT);

    let mut candidates = Vec::with_capacity(families.len() * noise_grid.len());
    for (fi, &family) in families.iter().enumerate() {
        let bounds = family.bounds();
        for (ni, &noise) in noise_grid.iter().enumerate() {
            let mut rng = rng_from_seed(derive_seed(base, (fi * noise_grid.len() + ni) as u64));
            let mut best: Option<(Vec<f64>, f64)> = None;
            for r in 0..=GPR_RESTARTS {
                let start = if r == 0 { family.default_params() } else { random_start(family, &mut rng) };
                let objective = |p: &[f64]| {
                    let kernel = Kernel { family, log_params: p.to_vec() };
                    lml_and_grad(&d2, y, &kernel, noise).ok().map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
                };
                if let Some(m) = minimize_box(objective, &start, &bounds, MAX_ITER) {
                    let lml = -m.value;
                    if lml.is_finite() && best.as_ref().is_none_or(|(_, b)| lml > *b) {
                        best = Some((m.x, lml));
                    }
                }
            }
            if let Some((log_params, lml)) = best {
                candidates.push(GprCandidate { family, noise, log_params, log_marginal_likelihood: lml });
            }
        }
    }
    let winner = candidates
        .iter()
        .enumerate()
        .fold(None::<usize>, |acc, (i, c)| match acc {
            Some(b) if candidates[b].log_marginal_likelihood >= c.log_marginal_likelihood => Some(b),
            _ => Some(i),
        })
        .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
    let c = &candidates[winner];
    let mut model = GprModel::fit_fixed(train, Kernel::new(c.family, c.log_params.clone())?, c.noise)?;
    model.candidates = candidates;
    Ok(model)
}

impl FittedModel for GprModel {
    /// Posterior predictive of a new noisy label: the latent variance plus the noise variance.
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        if query.p() != self.train_x.cols() {
            return Err(Error::DimensionMismatch { expected: self.train_x.cols(), got: query.p() });
        }
        let prior = self.kernel.diag();
        let mut mean = Vec::with_capacity(query.n());
        let mut sd = Vec::with_capacity(query.n());
        for q in query.features().row_iter() {
            let ks: Vec<f64> = self.train_x.row_iter().map(|t| self.kernel.eval(q, t)).collect();
            mean.push(dot(&ks, &self.alpha));
            let v = self.chol.solve_lower(&ks);
            let latent = (prior - dot(&v, &v)).max(0.0);
            sd.push((latent + self.noise).sqrt());
        }
        Ok(PredictiveDistribution::gaussian(mean, sd))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprPredictor {
    pub families: Vec<KernelFamily>,
    pub noise_grid: Vec<f64>,
    pub seed: u64,
}

impl GprPredictor {
    pub fn new(seed: u64) -> Self {
        GprPredictor { families: KernelFamily::ALL.to_vec(), noise_grid: DEFAULT_NOISE_GRID.to_vec(), seed }
    }
}

impl Predictor for GprPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_gpr_with_families(train, &self.families, &self.noise_grid, self.seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random_instance(seed: u64, n: usize) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = x.row_iter().map(|r| (3.0 * r[0]).sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        Dataset::labeled(x, y).unwrap()
    }

    #[test]
    fn single_point_posterior() {
        for (y0, s2) in [(1.3, 0.1), (-2.0, 0.05), (0.7, 0.2)] {
            let d = Dataset::from_rows(&[vec![0.4]], Some(vec![y0])).unwrap();
            let k = Kernel::new(KernelFamily::ConstRbf, vec![0.0, 0.3]).unwrap();
            let m = GprModel::fit_fixed(&d, k, s2).unwrap();
            let p = m.predict(&d.without_labels()).unwrap();
            assert!((p.mean[0] - y0 / (1.0 + s2)).abs() < 1e-12);
            let latent = 1.0 - 1.0 / (1.0 + s2);
            assert!((p.sd[0] - (latent + s2).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn lml_matches_dense_formula() {
        let d = random_instance(2, 6);
        let k = Kernel::new(KernelFamily::ConstMatern, vec![0.2, -0.4]).unwrap();
        let (v, _) = log_marginal_likelihood(&d, &k, 0.1).unwrap();
        let mut c = k.gram(d.features(), d.features());
        c.add_diagonal(0.1);
        let inv = Cholesky::new(&c).unwrap().inverse();
        let y = d.labels().unwrap();
        let quad = dot(y, &inv.matvec(y));
        // determinant by Gaussian elimination, independent of the Cholesky path
        let n = 6;
        let mut a = c.clone();
        let mut det = 1.0;
        for col in 0..n {
            det *= a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / a[(col, col)];
                for cc in col..n {
                    let t = a[(col, cc)];
                    a[(r, cc)] -= f * t;
                }
            }
        }
        let expect = -0.5 * quad - 0.5 * det.ln() - 3.0 * (2.0 * PI).ln();
        assert!((v - expect).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let d = random_instance(100 + seed, 10);
            for family in KernelFamily::ALL {
                let params: Vec<f64> = (0..family.n_params()).map(|j| 0.1 * (j as f64) - 0.2).collect();
                let k = Kernel::new(family, params.clone()).unwrap();
                let (_, g) = log_marginal_likelihood(&d, &k, 0.1).unwrap();
                for j in 0..params.len() {
                    let h = 1e-5;
                    let eval = |delta: f64| {
                        let mut p = params.clone();
                        p[j] += delta;
                        log_marginal_likelihood(&d, &Kernel::new(family, p).unwrap(), 0.1).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                    assert!(rel < 1e-4, "{family:?} j={j}: {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn winner_dominates_candidates() {
        let d = random_instance(7, 15);
        let m = fit_gpr(&d, &DEFAULT_NOISE_GRID, 3).unwrap();
        assert_eq!(m.candidates().len(), 20);
        for c in m.candidates() {
            assert!(m.log_marginal_likelihood() >= c.log_marginal_likelihood - 1e-9);
        }
        let again = fit_gpr(&d, &DEFAULT_NOISE_GRID, 3).unwrap();
        assert_eq!(again.kernel(), m.kernel());
    }

    #[test]
    fn singleton_noise_grid() {
        let d = random_instance(8, 12);
        let m = fit_gpr(&d, &[0.05], 1).unwrap();
        assert_eq!(m.noise(), 0.05);
        assert!(fit_gpr(&d, &[], 1).is_err());
        let one = Dataset::from_rows(&[vec![0.0]], Some(vec![1.0])).unwrap();
        assert!(fit_gpr(&one, &[0.1], 1).is_err());
    }

    #[test]
    fn far_field_reverts_to_zero() {
        let d = random_instance(9, 20);
        let m = fit_gpr_with_families(&d, &[KernelFamily::ConstRbf, KernelFamily::ConstMatern], &DEFAULT_NOISE_GRID, 0).unwrap();
        let far = Dataset::from_rows(&[vec![1e4]], None).unwrap();
        assert!(m.predict_mean(&far).unwrap()[0].abs() < 1e-3);
    }
}

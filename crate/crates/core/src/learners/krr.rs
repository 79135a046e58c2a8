//! Kernel ridge regression without an intercept.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::kernel::{median_heuristic, RbfKernel};
use super::{FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

/// Kernel choice for KRR. `MedianRbf` resolves its length-scale from the training inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KrrKernel {
    MedianRbf,
    Rbf { lengthscale: f64 },
}

#[derive(Debug, Clone)]
pub struct KrrModel {
    kernel: RbfKernel,
    lambda: f64,
    train_x: Matrix,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Solve `(K + nλI)α = y`.
pub fn fit_krr(train: &Dataset, kernel: KrrKernel, lambda: f64) -> Result<KrrModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("KRR lambda must be positive"));
    }
    let y = train.require_labels()?;
    let x = train.features();
    let kernel = match kernel {
        KrrKernel::MedianRbf => RbfKernel { lengthscale: median_heuristic(x)? },
        KrrKernel::Rbf { lengthscale } if lengthscale > 0.0 && lengthscale.is_finite() => RbfKernel { lengthscale },
        KrrKernel::Rbf { .. } => return Err(invalid("RBF length-scale must be positive")),
    };
    let mut k = kernel.gram(x, x);
    k.add_diagonal(train.n() as f64 * lambda);
    let (chol, jitter) = Cholesky::with_jitter(&k)?;
    let alpha = chol.solve(y);
    Ok(KrrModel { kernel, lambda, train_x: x.clone(), alpha, jitter })
}

impl KrrModel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn dual_coefficients(&self) -> &[f64] {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `‖(K + nλI)α − y‖∞` against the given labels.
    pub fn dual_residual(&self, y: &[f64]) -> f64 {
        let n = self.train_x.rows();
        let mut k = self.kernel.gram(&self.train_x, &self.train_x);
        k.add_diagonal(n as f64 * self.lambda);
        k.matvec(&self.alpha).iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn predict_values(&self, query: &Matrix) -> Result<Vec<f64>> {
        if query.cols() != self.train_x.cols() {
            return Err(Error::DimensionMismatch { expected: self.train_x.cols(), got: query.cols() });
        }
        Ok(query
            .row_iter()
            .map(|q| {
                let ks: Vec<f64> = self.train_x.row_iter().map(|t| self.kernel.eval(q, t)).collect();
                dot(&ks, &self.alpha)
            })
            .collect())
    }
}

impl FittedModel for KrrModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::point(self.predict_values(query.features())?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrrPredictor {
    pub kernel: KrrKernel,
    pub lambda: f64,
}

impl Predictor for KrrPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_krr(train, self.kernel, self.lambda)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_point_solve() {
        let d = Dataset::from_rows(&[vec![0.3, 0.1]], Some(vec![2.5])).unwrap();
        let m = fit_krr(&d, KrrKernel::Rbf { lengthscale: 1.0 }, 0.25).unwrap();
        assert!((m.dual_coefficients()[0] - 2.5 / 1.25).abs() < 1e-14);
    }

    #[test]
    fn identity_gram_solve() {
        // far-apart points with a tiny length-scale give K = I to machine precision
        let n = 5;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![100.0 * i as f64]).collect();
        let y = vec![1.0, -2.0, 0.5, 3.0, 4.0];
        let d = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let lambda = 0.1;
        let m = fit_krr(&d, KrrKernel::Rbf { lengthscale: 1.0 }, lambda).unwrap();
        for i in 0..n {
            assert!((m.dual_coefficients()[i] - y[i] / (1.0 + n as f64 * lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_and_shrinkage() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + r[0] - r[1] * r[1]).collect();
        let d = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        for lambda in [1e-6, 1e-3, 1.0] {
            let m = fit_krr(&d, KrrKernel::MedianRbf, lambda).unwrap();
            assert!(m.dual_residual(&y) < 1e-8);
        }
        let huge = fit_krr(&d, KrrKernel::MedianRbf, 1e12).unwrap();
        assert!(huge.predict_mean(&d.without_labels()).unwrap().iter().all(|v| v.abs() < 1e-9));
        assert!(fit_krr(&d, KrrKernel::MedianRbf, 0.0).is_err());
    }
}

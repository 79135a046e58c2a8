//! Two-class linear discriminant analysis.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{binary_labels, Classifier, FittedModel, PredictiveDistribution, Predictor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Class-1 share `π̂`.
    pub prior: f64,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// Pooled covariance.
    pub sigma: Matrix,
    /// Ridge added to the covariance diagonal when it was singular.
    pub jitter: f64,
    direction: Vec<f64>,
}

impl LdaModel {
    /// Plug-in rule from given parameters.
    pub fn from_parameters(prior: f64, mu0: Vec<f64>, mu1: Vec<f64>, sigma: Matrix) -> Result<Self> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(invalid("class prior must lie in (0, 1)"));
        }
        let p = mu0.len();
        if mu1.len() != p || sigma.rows() != p || sigma.cols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: mu1.len() });
        }
        let diff: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
        let (chol, jitter) = match Cholesky::new(&sigma) {
            Ok(c) => (c, 0.0),
            Err(_) => {
                let ridge = 1e-8 * sigma.trace() / p as f64;
                let mut s = sigma.clone();
                s.add_diagonal(ridge);
                (Cholesky::new(&s).map_err(|_| Error::Singular("pooled covariance".into()))?, ridge)
            }
        };
        let direction = chol.solve(&diff);
        Ok(LdaModel { prior, mu0, mu1, sigma, jitter, direction })
    }

    /// `log(π̂/(1−π̂)) + (x − (μ̂₀+μ̂₁)/2)ᵀ Σ̂⁻¹(μ̂₁ − μ̂₀)`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let centered: Vec<f64> = x.iter().zip(self.mu0.iter().zip(&self.mu1)).map(|(v, (a, b))| v - 0.5 * (a + b)).collect();
        (self.prior / (1.0 - self.prior)).ln() + dot(&centered, &self.direction)
    }

    fn check(&self, query: &Dataset) -> Result<()> {
        if query.p() != self.mu0.len() {
            return Err(Error::DimensionMismatch { expected: self.mu0.len(), got: query.p() });
        }
        Ok(())
    }
}

pub fn fit_lda(train: &Dataset) -> Result<LdaModel> {
    let labels = binary_labels(train.require_labels()?)?;
    let (n, p) = (train.n(), train.p());
    let n1 = labels.iter().filter(|&&l| l).count();
    if n1 == 0 || n1 == n {
        return Err(Error::InvalidData("LDA needs both classes".into()));
    }
    if n < p + 2 {
        return Err(invalid("LDA needs n >= p + 2"));
    }
    let x = train.features();
    let mut mu = [vec![0.0; p], vec![0.0; p]];
    for (r, &l) in x.row_iter().zip(&labels) {
        mu[l as usize].iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    let counts = [(n - n1) as f64, n1 as f64];
    for c in 0..2 {
        mu[c].iter_mut().for_each(|m| *m /= counts[c]);
    }
    let mut sigma = Matrix::zeros(p, p);
    for (r, &l) in x.row_iter().zip(&labels) {
        let d: Vec<f64> = r.iter().zip(&mu[l as usize]).map(|(a, b)| a - b).collect();
        for a in 0..p {
            for b in 0..=a {
                sigma[(a, b)] += d[a] * d[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v = sigma[(a, b)] / (n - 2) as f64;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    let [mu0, mu1] = mu;
    LdaModel::from_parameters(n1 as f64 / n as f64, mu0, mu1, sigma)
}

impl Classifier for LdaModel {
    fn classify(&self, query: &Dataset) -> Result<Vec<f64>> {
        self.check(query)?;
        Ok(query.features().row_iter().map(|x| if self.score(x) >= 0.0 { 1.0 } else { 0.0 }).collect())
    }
}

impl FittedModel for LdaModel {
    /// Class-1 posterior under the fitted Gaussian model.
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        self.check(query)?;
        let p = query.features().row_iter().map(|x| crate::synthgen::logistic(self.score(x))).collect();
        Ok(PredictiveDistribution::point(p))
    }
}

pub fn lda_classify(model: &LdaModel, query: &Dataset) -> Result<Vec<f64>> {
    model.classify(query)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LdaPredictor;

impl Predictor for LdaPredictor {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_lda(train)?))
    }
}

//! Ridge regression on a full polynomial basis, with optional sample weights.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_weights, FittedModel, PredictiveDistribution, Predictor, WeightedRegressor};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, least_squares, Matrix};

/// Exponent vectors of every monomial of total degree `1..=degree` in `p`
/// variables, graded then lexicographic. The constant term is not included.
pub fn monomials(p: usize, degree: usize) -> Vec<Vec<u32>> {
    fn grow(p: usize, start: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur[j] += 1;
            grow(p, j, left - 1, cur, out);
            cur[j] -= 1;
        }
    }
    let mut out = Vec::new();
    for d in 1..=degree {
        grow(p, 0, d, &mut vec![0; p], &mut out);
    }
    out
}

fn features(x: &[f64], terms: &[Vec<u32>]) -> Vec<f64> {
    let mut f = Vec::with_capacity(terms.len() + 1);
    f.push(1.0);
    for t in terms {
        f.push(x.iter().zip(t).map(|(v, &e)| v.powi(e as i32)).product());
    }
    f
}

/// Minimizes `Σ wᵢ(yᵢ − φ(xᵢ)ᵀβ)² / Σ wᵢ + λ‖β₋₀‖²`; the intercept is not
/// penalized. `lambda = 0` gives weighted least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyRidge {
    pub degree: usize,
    pub lambda: f64,
}

impl Default for PolyRidge {
    fn default() -> Self {
        PolyRidge { degree: 2, lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    pub terms: Vec<Vec<u32>>,
    /// Intercept first, then one coefficient per entry of `terms`.
    pub coef: Vec<f64>,
}

impl PolyModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        dot(&features(x, &self.terms), &self.coef)
    }
}

impl FittedModel for PolyModel {
    fn predict(&self, query: &Dataset) -> Result<PredictiveDistribution> {
        let p = self.terms.first().map_or(query.p(), |t| t.len());
        if query.p() != p {
            return Err(Error::DimensionMismatch { expected: p, got: query.p() });
        }
        Ok(PredictiveDistribution::point(query.features().row_iter().map(|x| self.predict_row(x)).collect()))
    }
}

impl PolyRidge {
    pub fn fit_model(&self, train: &Dataset, weights: Option<&[f64]>) -> Result<PolyModel> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("ridge penalty must be nonnegative"));
        }
        let y = train.require_labels()?;
        if let Some(w) = weights {
            check_weights(w, y.len())?;
        }
        let terms = monomials(train.p(), self.degree);
        let d = terms.len() + 1;
        let n = train.n();
        let total: f64 = weights.map_or(n as f64, |w| w.iter().sum());
        let extra = if self.lambda > 0.0 { d - 1 } else { 0 };
        let mut a = Matrix::zeros(n + extra, d);
        let mut b = vec![0.0; n + extra];
        for (i, x) in train.features().row_iter().enumerate() {
            let s = (weights.map_or(1.0, |w| w[i]) / total).sqrt();
            for (j, f) in features(x, &terms).into_iter().enumerate() {
                a[(i, j)] = s * f;
            }
            b[i] = s * y[i];
        }
        let r = self.lambda.sqrt();
        for k in 0..extra {
            a[(n + k, k + 1)] = r;
        }
        Ok(PolyModel { terms, coef: least_squares(&a, &b)? })
    }
}

impl Predictor for PolyRidge {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(self.fit_model(train, None)?))
    }
}

impl WeightedRegressor for PolyRidge {
    fn fit_weighted(&self, train: &Dataset, weights: &[f64]) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(self.fit_model(train, Some(weights))?))
    }
}

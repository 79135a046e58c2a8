use alloc::vec::Vec;
use core::str::FromStr;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{correlated_normal_rows, logistic, normal_vec};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Data-generating process behind each of the three working models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemiSupSetting {
    /// `Y = 1 + 1ᵀX + 1ᵀ(X³ − X² + eˣ) + ε`, `X ~ N(0, I)`, `ε ~ N(0, 4)`.
    Linear,
    /// `P(Y=1|X) = logistic(11 + 1ᵀX − 1ᵀX²)` under a two-component Gaussian mixture.
    Logistic,
    /// `Y = 1 + ½·1ᵀX + (1ᵀX)² + (1 + α₃ᵀX)ε` with heteroscedastic noise.
    Quantile,
}

impl FromStr for SemiSupSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "logistic" => Ok(Self::Logistic),
            "quantile" => Ok(Self::Quantile),
            other => Err(invalid(alloc::format!("unknown semi-supervised setting `{other}`"))),
        }
    }
}

pub const LOGISTIC_INTERCEPT: f64 = 11.0;
const LINEAR_NOISE_SD: f64 = 2.0;
const LOGISTIC_MIXTURE_CORR: f64 = 0.5;

impl SemiSupSetting {
    /// `α₃ = (0.5·1_{p−⌊p/2⌋}, 0_{⌊p/2⌋})` scaling the quantile-DGP noise.
    pub fn quantile_alpha3(p: usize) -> Vec<f64> {
        let ones = p - p / 2;
        (0..p).map(|j| if j < ones { 0.5 } else { 0.0 }).collect()
    }

    /// Logit of `P(Y=1|x)` for the logistic design.
    pub fn logistic_logit(x: &[f64]) -> f64 {
        LOGISTIC_INTERCEPT + x.iter().map(|v| v - v * v).sum::<f64>()
    }

    /// `E[Y | X = x]` (a probability for the logistic design).
    pub fn regression_function(self, x: &[f64]) -> f64 {
        match self {
            Self::Linear => 1.0 + x.iter().map(|&v| v + v.powi(3) - v * v + v.exp()).sum::<f64>(),
            Self::Logistic => logistic(Self::logistic_logit(x)),
            Self::Quantile => {
                let s: f64 = x.iter().sum();
                1.0 + 0.5 * s + s * s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupPair {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub setting: SemiSupSetting,
}

/// Draw `count` labeled rows from the setting's joint law using `rng`.
pub fn sample_semisup<R: Rng + ?Sized>(
    setting: SemiSupSetting,
    p: usize,
    count: usize,
    rng: &mut R,
) -> (Matrix, Vec<f64>) {
    match setting {
        SemiSupSetting::Linear => {
            let mut x = Matrix::zeros(count, p);
            let mut y = Vec::with_capacity(count);
            for i in 0..count {
                let row = x.row_mut(i);
                row.copy_from_slice(&normal_vec(rng, p));
                let eps: f64 = StandardNormal.sample(rng);
                y.push(setting.regression_function(row) + LINEAR_NOISE_SD * eps);
            }
            (x, y)
        }
        SemiSupSetting::Logistic => {
            let sigma = Matrix::from_fn(p, p, |i, j| LOGISTIC_MIXTURE_CORR.powi(i.abs_diff(j) as i32));
            let chol = Cholesky::new(&sigma).expect("AR(1) covariance is positive definite");
            let mut x = correlated_normal_rows(rng, count, chol.factor());
            let mut y = Vec::with_capacity(count);
            for i in 0..count {
                let shift = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let row = x.row_mut(i);
                row.iter_mut().for_each(|v| *v += shift);
                let prob = logistic(SemiSupSetting::logistic_logit(row));
                y.push(if rng.random::<f64>() < prob { 1.0 } else { 0.0 });
            }
            (x, y)
        }
        SemiSupSetting::Quantile => {
            let alpha3 = SemiSupSetting::quantile_alpha3(p);
            let mut x = Matrix::zeros(count, p);
            let mut y = Vec::with_capacity(count);
            for i in 0..count {
                let row = x.row_mut(i);
                row.copy_from_slice(&normal_vec(rng, p));
                let eps: f64 = StandardNormal.sample(rng);
                let scale = 1.0 + alpha3.iter().zip(row.iter()).map(|(a, v)| a * v).sum::<f64>();
                y.push(setting.regression_function(row) + scale * eps);
            }
            (x, y)
        }
    }
}

/// Labeled set of size `n` and unlabeled set of size `m` from one design.
pub fn gen_semisup(setting: SemiSupSetting, p: usize, n: usize, m: usize, seed: u64) -> Result<SemiSupPair> {
    if p == 0 {
        return Err(invalid("p must be >= 1"));
    }
    if n == 0 || m == 0 {
        return Err(invalid("n and m must be >= 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let (xl, yl) = sample_semisup(setting, p, n, &mut rng);
    let mut rng_u = rng_from_seed(derive_seed(seed, stream::AUX));
    let (xu, _) = sample_semisup(setting, p, m, &mut rng_u);
    Ok(SemiSupPair {
        labeled: Dataset::labeled(xl, yl)?,
        unlabeled: Dataset::unlabeled(xu)?,
        setting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_alpha3_splits_half() {
        assert_eq!(SemiSupSetting::quantile_alpha3(4), [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(SemiSupSetting::quantile_alpha3(5), [0.5, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn logistic_intercept_is_eleven() {
        assert_eq!(SemiSupSetting::logistic_logit(&[0.0, 0.0]), 11.0);
    }

    #[test]
    fn linear_mean_at_origin() {
        assert_eq!(SemiSupSetting::Linear.regression_function(&[0.0]), 2.0);
    }

    #[test]
    fn deterministic_and_shaped() {
        let a = gen_semisup(SemiSupSetting::Quantile, 3, 20, 30, 9).unwrap();
        let b = gen_semisup(SemiSupSetting::Quantile, 3, 20, 30, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labeled.n(), 20);
        assert_eq!(a.unlabeled.n(), 30);
        assert!(a.unlabeled.labels().is_none());
        let c = gen_semisup(SemiSupSetting::Quantile, 3, 20, 30, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn logistic_labels_are_binary() {
        let d = gen_semisup(SemiSupSetting::Logistic, 4, 200, 5, 1).unwrap();
        assert!(d.labeled.labels().unwrap().iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_semisup(SemiSupSetting::Linear, 0, 5, 5, 0).is_err());
        assert!(gen_semisup(SemiSupSetting::Linear, 1, 0, 5, 0).is_err());
        assert!("cubic".parse::<SemiSupSetting>().is_err());
    }

    #[test]
    fn linear_noise_variance_is_four() {
        let mut rng = rng_from_seed(3);
        let n = 100_000;
        let (x, y) = sample_semisup(SemiSupSetting::Linear, 2, n, &mut rng);
        let resid: Vec<f64> = (0..n).map(|i| y[i] - SemiSupSetting::Linear.regression_function(x.row(i))).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        // Var of the sample variance of N(0, 4) is 2·16/n.
        let se = (32.0 / n as f64).sqrt();
        assert!((var - 4.0).abs() < 4.0 * se, "var = {var}");
    }
}

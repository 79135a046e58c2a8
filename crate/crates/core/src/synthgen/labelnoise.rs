use alloc::vec::Vec;
use core::str::FromStr;
use rand::Rng;

use super::{logistic, normal_vec};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const NOISE_DIM: usize = 5;
/// `P(Y = 1)` under M1.
pub const M1_PRIOR: f64 = 0.9;
/// Class-1 mean under M1; the class-0 mean is its negation.
pub const M1_MU1: [f64; NOISE_DIM] = [1.5, 0.0, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseModel {
    /// Gaussian classes with identity covariance, `P(Y=1) = 0.9`.
    M1,
    /// Uniform cube with a clipped paraboloid `η`.
    M2,
}

impl NoiseModel {
    /// Linear discriminant `log(π/(1−π)) + (x − (μ₀+μ₁)/2)ᵀ(μ₁ − μ₀)` of M1.
    pub fn m1_discriminant(x: &[f64]) -> f64 {
        let log_odds = (M1_PRIOR / (1.0 - M1_PRIOR)).ln();
        log_odds + x.iter().zip(M1_MU1.iter()).map(|(xi, m)| xi * 2.0 * m).sum::<f64>()
    }

    /// `η(x) = P(Y = 1 | X = x)`.
    pub fn eta(self, x: &[f64]) -> f64 {
        match self {
            Self::M1 => logistic(Self::m1_discriminant(x)),
            Self::M2 => (4.0 * (x[0] - 0.5).powi(2) + 4.0 * (x[1] - 0.5).powi(2)).min(1.0),
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R, n: usize) -> (Matrix, Vec<f64>) {
        let mut x = Matrix::zeros(n, NOISE_DIM);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row = x.row_mut(i);
            match self {
                Self::M1 => {
                    let label = rng.random::<f64>() < M1_PRIOR;
                    let sign = if label { 1.0 } else { -1.0 };
                    let z = normal_vec(rng, NOISE_DIM);
                    for j in 0..NOISE_DIM {
                        row[j] = sign * M1_MU1[j] + z[j];
                    }
                    y.push(label as u8 as f64);
                }
                Self::M2 => {
                    for v in row.iter_mut() {
                        *v = rng.random::<f64>();
                    }
                    let eta = self.eta(row);
                    y.push((rng.random::<f64>() < eta) as u8 as f64);
                }
            }
        }
        (x, y)
    }
}

impl FromStr for NoiseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            other => Err(invalid(alloc::format!("unknown label-noise model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLabelBundle {
    /// Training covariates with corrupted labels.
    pub train: Dataset,
    pub train_clean_labels: Vec<f64>,
    /// Test covariates with clean labels.
    pub test: Dataset,
    pub rho: f64,
    pub model: NoiseModel,
}

impl NoisyLabelBundle {
    pub fn eta(&self, x: &[f64]) -> f64 {
        self.model.eta(x)
    }

    pub fn clean_train(&self) -> Dataset {
        self.train.with_labels(self.train_clean_labels.clone()).expect("same row count")
    }
}

/// Clean draws come from one stream and the flips from another, so the clean
/// sample does not depend on `rho`.
pub fn gen_labelnoise(model: NoiseModel, n: usize, rho: f64, n_test: usize, seed: u64) -> Result<NoisyLabelBundle> {
    if !(0.0..0.5).contains(&rho) {
        return Err(invalid("rho must lie in [0, 0.5)"));
    }
    if n == 0 || n_test == 0 {
        return Err(invalid("n and n_test must be >= 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let (x, clean) = model.sample(&mut rng, n);
    let mut flips = rng_from_seed(derive_seed(seed, stream::NOISE));
    let noisy: Vec<f64> = clean
        .iter()
        .map(|&y| if flips.random::<f64>() < rho { 1.0 - y } else { y })
        .collect();
    let mut rng_t = rng_from_seed(derive_seed(seed, stream::TEST));
    let (xt, yt) = model.sample(&mut rng_t, n_test);
    Ok(NoisyLabelBundle {
        train: Dataset::labeled(x, noisy)?,
        train_clean_labels: clean,
        test: Dataset::labeled(xt, yt)?,
        rho,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m2_eta_extremes() {
        assert_eq!(NoiseModel::M2.eta(&[0.5, 0.5, 0.1, 0.2, 0.3]), 0.0);
        assert_eq!(NoiseModel::M2.eta(&[0.0, 0.0, 0.1, 0.2, 0.3]), 1.0);
    }

    #[test]
    fn m1_discriminant_at_origin() {
        assert!((NoiseModel::m1_discriminant(&[0.0; 5]) - 9.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_rho_keeps_labels() {
        let b = gen_labelnoise(NoiseModel::M1, 200, 0.0, 10, 3).unwrap();
        assert_eq!(b.train.labels().unwrap(), b.train_clean_labels.as_slice());
    }

    #[test]
    fn flip_rate_matches_rho() {
        let n = 100_000;
        let rho = 0.3;
        let b = gen_labelnoise(NoiseModel::M2, n, rho, 1, 12).unwrap();
        let flipped = b
            .train
            .labels()
            .unwrap()
            .iter()
            .zip(&b.train_clean_labels)
            .filter(|(a, c)| a != c)
            .count() as f64
            / n as f64;
        let se = (rho * (1.0 - rho) / n as f64).sqrt();
        assert!((flipped - rho).abs() < 4.0 * se, "flip rate {flipped}");
    }

    #[test]
    fn rho_out_of_range() {
        assert!(gen_labelnoise(NoiseModel::M1, 10, 0.5, 10, 0).is_err());
        assert!(gen_labelnoise(NoiseModel::M1, 10, -0.1, 10, 0).is_err());
    }
}

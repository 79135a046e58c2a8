use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_from_seed, stream};

/// The five regression functions of the covariate-shift study, (i) to (v).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeanFunction {
    I,
    II,
    III,
    IV,
    V,
}

fn ramp(t: f64) -> f64 {
    t.max(0.0).min(1.0)
}

impl MeanFunction {
    pub const ALL: [MeanFunction; 5] = [Self::I, Self::II, Self::III, Self::IV, Self::V];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::I => (2.0 * PI * x).cos() - 1.0,
            Self::II => (2.0 * PI * x).sin(),
            Self::III => (x - 0.5).abs() - 0.5,
            Self::IV => ramp(4.0 * x - 1.0) + ramp(4.0 * x - 3.0) - 2.0,
            Self::V => x * (4.0 * PI * x).sin(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::I => "i",
            Self::II => "ii",
            Self::III => "iii",
            Self::IV => "iv",
            Self::V => "v",
        }
    }
}

impl FromStr for MeanFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Self::I),
            "ii" | "2" => Ok(Self::II),
            "iii" | "3" => Ok(Self::III),
            "iv" | "4" => Ok(Self::IV),
            "v" | "5" => Ok(Self::V),
            other => Err(invalid(alloc::format!("unknown mean function `{other}`"))),
        }
    }
}

const SOURCE_LOW_WEIGHT: f64 = 5.0 / 6.0;
const TARGET_LOW_WEIGHT: f64 = 1.0 / 6.0;

fn mixture_density(low_weight: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x < 0.5 {
        2.0 * low_weight
    } else {
        2.0 * (1.0 - low_weight)
    }
}

/// `(5/6)·Unif(0, 0.5) + (1/6)·Unif(0.5, 1)`.
pub fn source_density(x: f64) -> f64 {
    mixture_density(SOURCE_LOW_WEIGHT, x)
}

/// `(1/6)·Unif(0, 0.5) + (5/6)·Unif(0.5, 1)`.
pub fn target_density(x: f64) -> f64 {
    mixture_density(TARGET_LOW_WEIGHT, x)
}

fn sample_mixture<R: Rng + ?Sized>(rng: &mut R, low_weight: f64) -> f64 {
    let low = rng.random::<f64>() < low_weight;
    let u = rng.random::<f64>();
    if low {
        0.5 * u
    } else {
        0.5 + 0.5 * u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovShiftBundle {
    pub source: Dataset,
    pub target_test: Dataset,
    /// Unlabeled draws from the target covariate law.
    pub target_aux: Dataset,
    pub mean_fn: MeanFunction,
}

impl CovShiftBundle {
    pub fn true_mean(&self, x: f64) -> f64 {
        self.mean_fn.eval(x)
    }

    /// `p_t(x) / p_s(x)`: 1/5 below one half, 5 above.
    pub fn true_density_ratio(&self, x: f64) -> f64 {
        if x < 0.5 {
            TARGET_LOW_WEIGHT / SOURCE_LOW_WEIGHT
        } else {
            (1.0 - TARGET_LOW_WEIGHT) / (1.0 - SOURCE_LOW_WEIGHT)
        }
    }
}

fn labeled_draw<R: Rng + ?Sized>(rng: &mut R, n: usize, low_weight: f64, f: MeanFunction) -> Result<Dataset> {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sample_mixture(rng, low_weight);
        let eps: f64 = StandardNormal.sample(rng);
        xs.push(x);
        ys.push(f.eval(x) + eps);
    }
    Dataset::labeled(Matrix::from_vec(n, 1, xs)?, ys)
}

pub fn gen_covshift(mean_fn: MeanFunction, n: usize, m: usize, n_aux: usize, seed: u64) -> Result<CovShiftBundle> {
    if n == 0 || m == 0 || n_aux == 0 {
        return Err(invalid("n, m and n_aux must be >= 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let source = labeled_draw(&mut rng, n, SOURCE_LOW_WEIGHT, mean_fn)?;
    let mut rng_t = rng_from_seed(derive_seed(seed, stream::TEST));
    let target_test = labeled_draw(&mut rng_t, m, TARGET_LOW_WEIGHT, mean_fn)?;
    let mut rng_a = rng_from_seed(derive_seed(seed, stream::AUX));
    let aux: Vec<f64> = (0..n_aux).map(|_| sample_mixture(&mut rng_a, TARGET_LOW_WEIGHT)).collect();
    let target_aux = Dataset::unlabeled(Matrix::from_vec(n_aux, 1, aux)?)?;
    Ok(CovShiftBundle { source, target_test, target_aux, mean_fn })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_function_spot_values() {
        assert_eq!(MeanFunction::I.eval(0.0), 0.0);
        assert_eq!(MeanFunction::IV.eval(0.5), -1.0);
        assert_eq!(MeanFunction::III.eval(0.5), -0.5);
        assert_eq!(MeanFunction::IV.eval(1.0), 0.0);
        assert_eq!(MeanFunction::IV.eval(0.0), -2.0);
    }

    #[test]
    fn density_ratio_two_levels() {
        let b = gen_covshift(MeanFunction::I, 10, 10, 10, 0).unwrap();
        assert!((b.true_density_ratio(0.75) - 5.0).abs() < 1e-12);
        assert!((b.true_density_ratio(0.25) - 0.2).abs() < 1e-12);
        for x in [0.1, 0.3, 0.6, 0.9] {
            let r = target_density(x) / source_density(x);
            assert!((r - b.true_density_ratio(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn source_mass_below_half() {
        let n = 100_000;
        let b = gen_covshift(MeanFunction::II, n, 1, 1, 5).unwrap();
        let below = b.source.features().as_slice().iter().filter(|&&x| x < 0.5).count() as f64 / n as f64;
        let p = 5.0 / 6.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((below - p).abs() < 4.0 * se);
        assert!(b.source.features().as_slice().iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn aux_is_unlabeled_and_deterministic() {
        let a = gen_covshift(MeanFunction::V, 20, 30, 40, 8).unwrap();
        assert!(a.target_aux.labels().is_none());
        assert_eq!(a.target_aux.n(), 40);
        assert_eq!(a, gen_covshift(MeanFunction::V, 20, 30, 40, 8).unwrap());
    }
}

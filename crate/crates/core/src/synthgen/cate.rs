use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::softplus;
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const CATE_DIM: usize = 6;

/// The six propensity/base/effect configurations of the treatment-effect study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CateSetup {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl CateSetup {
    pub const ALL: [CateSetup; 6] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::F];

    pub fn propensity(self, x: &[f64]) -> f64 {
        match self {
            Self::A => (PI * x[0] * x[1]).sin().max(0.2).min(0.8),
            Self::B => 0.5,
            Self::C => 1.0 / (1.0 + (x[1] + x[2]).exp()),
            Self::D => 1.0 / (1.0 + (-x[0]).exp() + (-x[1]).exp()),
            Self::E | Self::F => 1.0 / (1.0 + (3.0 * x[1] + 3.0 * x[2]).exp()),
        }
    }

    pub fn base(self, x: &[f64]) -> f64 {
        match self {
            Self::A => (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4],
            Self::B => 0.0f64.max(x[0] + x[1]).max(x[2]) + 0.0f64.max(x[3] + x[4]),
            Self::C => 2.0 * softplus(x[0] + x[1] + x[2]),
            Self::D => 0.5 * 0.0f64.max(x[0] + x[1] + x[2]) + 0.5 * 0.0f64.max(x[3] + x[4]),
            Self::E | Self::F => 5.0 * 0.0f64.max(x[0] + x[1]),
        }
    }

    pub fn effect(self, x: &[f64]) -> f64 {
        match self {
            Self::A => 0.2 + (x[0] + x[1]) / 2.0,
            Self::B | Self::F => x[0] + softplus(x[1]),
            Self::C => 1.0,
            Self::D => 0.0f64.max(x[0] + x[1] + x[2]) - 0.0f64.max(x[3] + x[4]),
            Self::E => {
                let hit = x[0] > 0.1 || x[1] > 0.1;
                2.0 * (hit as u8 as f64) - 1.0
            }
        }
    }
}

impl FromStr for CateSetup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            "E" => Ok(Self::E),
            "F" => Ok(Self::F),
            other => Err(invalid(alloc::format!("unknown CATE setup `{other}`"))),
        }
    }
}

/// True nuisance and effect functions of a generated causal dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CateOracle {
    pub setup: CateSetup,
}

impl CateOracle {
    pub fn propensity(&self, x: &[f64]) -> f64 {
        self.setup.propensity(x)
    }

    pub fn base(&self, x: &[f64]) -> f64 {
        self.setup.base(x)
    }

    pub fn effect(&self, x: &[f64]) -> f64 {
        self.setup.effect(x)
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        self.base(x) - self.effect(x) / 2.0
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        self.base(x) + self.effect(x) / 2.0
    }

    pub fn mu(&self, t: f64, x: &[f64]) -> f64 {
        if t >= 0.5 {
            self.mu1(x)
        } else {
            self.mu0(x)
        }
    }

    /// `m(x) = E[Y | X = x] = e(x)μ₁(x) + (1 − e(x))μ₀(x)`.
    pub fn outcome_mean(&self, x: &[f64]) -> f64 {
        let e = self.propensity(x);
        e * self.mu1(x) + (1.0 - e) * self.mu0(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    /// `n × 6` covariates in `[-0.5, 0.5]^6`.
    pub features: Matrix,
    /// Treatment indicators stored as `0.0` / `1.0`.
    pub treatment: Vec<f64>,
    pub outcome: Vec<f64>,
    pub oracle: CateOracle,
}

impl CausalDataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn covariates(&self) -> Dataset {
        Dataset::unlabeled(self.features.clone()).expect("generated covariates are valid")
    }

    /// Indices of the treated (`arm = true`) or control rows.
    pub fn arm_indices(&self, treated: bool) -> Vec<usize> {
        (0..self.n()).filter(|&i| (self.treatment[i] >= 0.5) == treated).collect()
    }

    /// Replace every outcome by its noiseless conditional mean `μ_T(X)`.
    pub fn noiseless(mut self) -> Self {
        for i in 0..self.n() {
            self.outcome[i] = self.oracle.mu(self.treatment[i], self.features.row(i));
        }
        self
    }
}

/// `n` i.i.d. covariate rows from `Unif([-0.5, 0.5]^6)`.
pub fn gen_cate_features<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    Matrix::from_fn(n, CATE_DIM, |_, _| rng.random::<f64>() - 0.5)
}

pub fn gen_cate(setup: CateSetup, n: usize, sigma2: f64, seed: u64) -> Result<CausalDataset> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(invalid("sigma2 must be positive"));
    }
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let oracle = CateOracle { setup };
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let features = gen_cate_features(&mut rng, n);
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|_| invalid("bad noise scale"))?;
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for i in 0..n {
        let x = features.row(i);
        let t = if rng.random::<f64>() < oracle.propensity(x) { 1.0 } else { 0.0 };
        treatment.push(t);
        outcome.push(oracle.mu(t, x) + noise.sample(&mut rng));
    }
    Ok(CausalDataset { features, treatment, outcome, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setup_a_at_probe_point() {
        let x = [0.0, 0.0, 0.5, 0.0, 0.0, 0.0];
        assert_eq!(CateSetup::A.base(&x), 0.0);
        assert!((CateSetup::A.effect(&x) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_pieces() {
        let x = [0.3, -0.2, 0.1, 0.4, -0.4, 0.0];
        assert_eq!(CateSetup::B.propensity(&x), 0.5);
        assert_eq!(CateSetup::C.effect(&x), 1.0);
        assert_eq!(CateSetup::E.effect(&x), 1.0);
        assert_eq!(CateSetup::E.effect(&[0.0; 6]), -1.0);
    }

    #[test]
    fn oracle_self_consistency() {
        let mut rng = rng_from_seed(11);
        let xs = gen_cate_features(&mut rng, 10_000);
        for setup in CateSetup::ALL {
            let o = CateOracle { setup };
            for x in xs.row_iter() {
                let (m0, m1, b, t) = (o.mu0(x), o.mu1(x), o.base(x), o.effect(x));
                let tol = 4.0 * f64::EPSILON * (1.0 + b.abs() + t.abs());
                assert!((m1 - m0 - t).abs() <= tol);
                assert!(((m0 + m1) / 2.0 - b).abs() <= tol);
                let e = o.propensity(x);
                assert!(e > 0.0 && e < 1.0);
            }
        }
    }

    #[test]
    fn generated_data_matches_law() {
        let d = gen_cate(CateSetup::A, 500, 1.0, 4).unwrap();
        assert_eq!(d, gen_cate(CateSetup::A, 500, 1.0, 4).unwrap());
        assert!(d.features.as_slice().iter().all(|v| (-0.5..=0.5).contains(v)));
        assert!(d.treatment.iter().all(|&t| t == 0.0 || t == 1.0));
        let clean = d.clone().noiseless();
        for i in 0..clean.n() {
            assert_eq!(clean.outcome[i], clean.oracle.mu(clean.treatment[i], clean.features.row(i)));
        }
        assert!(gen_cate(CateSetup::A, 10, 0.0, 1).is_err());
        assert!("G".parse::<CateSetup>().is_err());
    }
}

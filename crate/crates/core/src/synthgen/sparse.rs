use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;
use rand_distr::{Distribution, Normal};

use super::correlated_normal_rows;
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const BANDED_RHO: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BetaType {
    /// Unit coefficients spread evenly over the indices.
    I,
    /// Unit coefficients on the first `s` indices.
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovType {
    Identity,
    /// `Σ_ij = 0.35^|i−j|`.
    Banded,
}

impl FromStr for BetaType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            other => Err(invalid(alloc::format!("unknown beta type `{other}`"))),
        }
    }
}

impl FromStr for CovType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "orthogonal" => Ok(Self::Identity),
            "banded" => Ok(Self::Banded),
            other => Err(invalid(alloc::format!("unknown covariance type `{other}`"))),
        }
    }
}

pub fn banded_covariance(p: usize) -> Matrix {
    Matrix::from_fn(p, p, |i, j| BANDED_RHO.powi(i.abs_diff(j) as i32))
}

fn covariance(cov: CovType, p: usize) -> Matrix {
    match cov {
        CovType::Identity => Matrix::identity(p),
        CovType::Banded => banded_covariance(p),
    }
}

/// Zero-based support of `β*`.
///
/// Type I uses the one-based positions `round(k·p/s)`, `k = 0..s`, clamped to
/// `[1, p]`; a collision moves to the next free position (wrapping).
pub fn support(beta_type: BetaType, p: usize, s: usize) -> Vec<usize> {
    match beta_type {
        BetaType::II => (0..s).collect(),
        BetaType::I => {
            let mut taken = vec![false; p];
            let mut out = Vec::with_capacity(s);
            for k in 0..s {
                let pos = (k as f64 * p as f64 / s as f64).round() as usize;
                let mut idx = pos.clamp(1, p) - 1;
                while taken[idx] {
                    idx = (idx + 1) % p;
                }
                taken[idx] = true;
                out.push(idx);
            }
            out.sort_unstable();
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLinearDesign {
    pub beta_star: Vec<f64>,
    pub support: Vec<usize>,
    pub beta_type: BetaType,
    pub cov_type: CovType,
    pub snr: f64,
    pub sigma2: f64,
    pub train: Dataset,
    pub test: Dataset,
}

#[allow(clippy::too_many_arguments)]
pub fn gen_sparse_linear(
    p: usize,
    s: usize,
    beta_type: BetaType,
    cov_type: CovType,
    snr: f64,
    n: usize,
    n_test: usize,
    seed: u64,
) -> Result<SparseLinearDesign> {
    if s == 0 || s > p {
        return Err(invalid(alloc::format!("sparsity s = {s} must lie in [1, p = {p}]")));
    }
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(invalid("snr must be positive"));
    }
    if n == 0 || n_test == 0 {
        return Err(invalid("n and n_test must be >= 1"));
    }
    let support = support(beta_type, p, s);
    let mut beta_star = vec![0.0; p];
    for &j in &support {
        beta_star[j] = 1.0;
    }
    let sigma = covariance(cov_type, p);
    let signal = crate::linalg::dot(&beta_star, &sigma.matvec(&beta_star));
    let sigma2 = signal / snr;
    let chol = Cholesky::new(&sigma)?;
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|_| invalid("bad noise scale"))?;

    let draw = |stream_id: u64, rows: usize| -> Result<Dataset> {
        let mut rng = rng_from_seed(derive_seed(seed, stream_id));
        let x = correlated_normal_rows(&mut rng, rows, chol.factor());
        let y = x.row_iter().map(|r| crate::linalg::dot(r, &beta_star) + noise.sample(&mut rng)).collect();
        Dataset::labeled(x, y)
    };
    let train = draw(stream::DATA, n)?;
    let test = draw(stream::TEST, n_test)?;
    Ok(SparseLinearDesign { beta_star, support, beta_type, cov_type, snr, sigma2, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_from_snr() {
        let d = gen_sparse_linear(20, 5, BetaType::I, CovType::Identity, 1.22, 10, 10, 0).unwrap();
        assert!((d.sigma2 - 5.0 / 1.22).abs() < 1e-12);
        assert_eq!(d.beta_star.iter().filter(|&&b| b == 1.0).count(), 5);
        assert_eq!(d.beta_star.iter().filter(|&&b| b == 0.0).count(), 15);
    }

    #[test]
    fn banded_entry() {
        let s = banded_covariance(4);
        assert!((s[(0, 2)] - 0.1225).abs() < 1e-15);
    }

    #[test]
    fn supports() {
        assert_eq!(support(BetaType::II, 100, 10), (0..10).collect::<Vec<_>>());
        assert_eq!(support(BetaType::I, 100, 5), [0, 19, 39, 59, 79]);
        let full = support(BetaType::I, 7, 7);
        assert_eq!(full, (0..7).collect::<Vec<_>>());
        for s in 1..=30 {
            let sup = support(BetaType::I, 30, s);
            assert_eq!(sup.len(), s);
            assert!(sup.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rejects_bad_sparsity() {
        assert!(gen_sparse_linear(5, 6, BetaType::I, CovType::Identity, 1.0, 5, 5, 0).is_err());
    }

    #[test]
    fn empirical_covariance_matches() {
        let p = 6;
        let n = 100_000;
        let d = gen_sparse_linear(p, 2, BetaType::II, CovType::Banded, 6.0, n, 1, 2).unwrap();
        let sigma = banded_covariance(p);
        let x = d.train.features();
        for a in 0..p {
            for b in 0..p {
                let c: f64 = x.row_iter().map(|r| r[a] * r[b]).sum::<f64>() / n as f64;
                assert!((c - sigma[(a, b)]).abs() < 0.05);
            }
        }
    }
}

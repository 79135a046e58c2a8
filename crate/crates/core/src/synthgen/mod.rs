//! Seeded generators for every simulation design in the workbench.
//!
//! All generators are pure functions of their arguments: two calls with the
//! same arguments and seed return bit-identical data.

mod cate;
mod covshift;
mod labelnoise;
mod probe;
mod semisup;
mod sparse;

pub use cate::{gen_cate, gen_cate_features, CateOracle, CateSetup, CausalDataset, CATE_DIM};
pub use covshift::{gen_covshift, source_density, target_density, CovShiftBundle, MeanFunction};
pub use labelnoise::{gen_labelnoise, NoiseModel, NoisyLabelBundle, M1_MU1, M1_PRIOR};
pub use probe::{gen_function_probe, FunctionProbe, ProbeFunction, ProbeKind, PROBE_NOISE_SD};
pub use semisup::{gen_semisup, sample_semisup, SemiSupPair, SemiSupSetting};
pub use sparse::{banded_covariance, gen_sparse_linear, BetaType, CovType, SparseLinearDesign};

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub(crate) fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draw `n` rows of `N_p(mean, L Lᵀ)` given the lower Cholesky factor `L`.
pub(crate) fn correlated_normal_rows<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    chol_lower: &Matrix,
) -> Matrix {
    let p = chol_lower.rows();
    let mut out = Matrix::zeros(n, p);
    for i in 0..n {
        let z = normal_vec(rng, p);
        let row = out.row_mut(i);
        for a in 0..p {
            let lrow = chol_lower.row(a);
            row[a] = (0..=a).map(|b| lrow[b] * z[b]).sum();
        }
    }
    out
}

/// `1 / (1 + exp(−t))`, stable for large `|t|`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::erm::{logistic_moments, newton_direction, symmetrize_scaled};
use super::{erm, WorkingModel, LOGISTIC_TOL};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm_inf, Cholesky, Matrix};
use crate::rng::{derive_seed, rng_from_seed, stream, WorkRng};
use crate::synthgen::{logistic, sample_semisup, softplus, SemiSupSetting};

/// Largest sample used for the quantile truth, which needs a full solve.
pub const MC_QUANTILE_CAP: usize = 1_000_000;
const MIN_DRAWS: usize = 10_000;
const BATCH: usize = 1 << 16;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct McTruth {
    pub theta: Vec<f64>,
    /// Sandwich standard errors of the Monte-Carlo estimate (linear and logistic only).
    pub std_error: Option<Vec<f64>>,
    pub draws: usize,
    pub notes: Vec<String>,
}

/// Replays the seeded sample in fixed-size batches of `(design, y)`.
struct Batches {
    setting: SemiSupSetting,
    p: usize,
    n: usize,
    seed: u64,
}

impl Batches {
    fn for_each(&self, mut f: impl FnMut(&Matrix, &[f64])) {
        let mut rng: WorkRng = rng_from_seed(derive_seed(self.seed, stream::DATA));
        let mut left = self.n;
        while left > 0 {
            let count = left.min(BATCH);
            let (x, y) = sample_semisup(self.setting, self.p, count, &mut rng);
            let design = Matrix::from_fn(count, self.p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
            f(&design, &y);
            left -= count;
        }
    }
}

fn outer_add(m: &mut Matrix, x: &[f64], w: f64) {
    for a in 0..x.len() {
        let wa = w * x[a];
        let row = m.row_mut(a);
        for b in 0..=a {
            row[b] += wa * x[b];
        }
    }
}

/// `diag(A⁻¹ M A⁻¹)` square-rooted, for lower-triangle-accumulated `M`.
fn sandwich(bread: &Cholesky, meat: &mut Matrix) -> Vec<f64> {
    symmetrize_scaled(meat, 1.0);
    let inv = bread.inverse();
    let d = inv.rows();
    (0..d)
        .map(|j| {
            let a = inv.row(j);
            dot(a, &meat.matvec(a)).max(0.0).sqrt()
        })
        .collect()
}

/// Estimand `θ*` of the working model under the setting's data law, from
/// `n_mc` seeded draws.
pub fn mc_truth(setting: SemiSupSetting, p: usize, tau: Option<f64>, n_mc: usize, seed: u64) -> Result<McTruth> {
    if n_mc < MIN_DRAWS {
        return Err(invalid(format!("n_mc must be >= {MIN_DRAWS}")));
    }
    if p == 0 {
        return Err(invalid("p must be >= 1"));
    }
    let d = p + 1;
    match setting {
        SemiSupSetting::Linear => {
            let src = Batches { setting, p, n: n_mc, seed };
            let mut xtx = Matrix::zeros(d, d);
            let mut xty = vec![0.0; d];
            src.for_each(|x, y| {
                for (r, &yi) in x.row_iter().zip(y) {
                    outer_add(&mut xtx, r, 1.0);
                    xty.iter_mut().zip(r).for_each(|(s, v)| *s += v * yi);
                }
            });
            symmetrize_scaled(&mut xtx, 1.0);
            let chol = Cholesky::new(&xtx)?;
            let theta = chol.solve(&xty);
            let mut meat = Matrix::zeros(d, d);
            src.for_each(|x, y| {
                for (r, &yi) in x.row_iter().zip(y) {
                    let e = yi - dot(r, &theta);
                    outer_add(&mut meat, r, e * e);
                }
            });
            let se = sandwich(&chol, &mut meat);
            Ok(McTruth { theta, std_error: Some(se), draws: n_mc, notes: Vec::new() })
        }
        SemiSupSetting::Logistic => logistic_truth(Batches { setting, p, n: n_mc, seed }),
        SemiSupSetting::Quantile => {
            let tau = tau.ok_or_else(|| invalid("the quantile setting needs a quantile level"))?;
            let n = n_mc.min(MC_QUANTILE_CAP);
            let mut notes = Vec::new();
            if n < n_mc {
                notes.push(format!("quantile truth capped at {n} of {n_mc} requested draws"));
            }
            let mut rng: WorkRng = rng_from_seed(derive_seed(seed, stream::DATA));
            let mut rows = Vec::with_capacity(n * p);
            let mut labels = Vec::with_capacity(n);
            let mut left = n;
            while left > 0 {
                let count = left.min(BATCH);
                let (x, y) = sample_semisup(setting, p, count, &mut rng);
                rows.extend_from_slice(x.as_slice());
                labels.extend_from_slice(&y);
                left -= count;
            }
            let data = Dataset::labeled(Matrix::from_vec(n, p, rows)?, labels)?;
            let fit = erm(WorkingModel::QuantileReg(tau), &data)?;
            Ok(McTruth { theta: fit.theta, std_error: None, draws: n, notes })
        }
    }
}

/// Newton iterations where every gradient, Hessian and objective evaluation
/// replays the seeded stream instead of holding the sample in memory.
fn logistic_truth(src: Batches) -> Result<McTruth> {
    let d = src.p + 1;
    let n = src.n as f64;
    let objective = |theta: &[f64]| {
        let mut total = 0.0;
        src.for_each(|x, y| {
            for (r, &yi) in x.row_iter().zip(y) {
                let eta = dot(r, theta);
                total += softplus(eta) - yi * eta;
            }
        });
        total / n
    };
    let mut theta = vec![0.0; d];
    for iter in 0..MAX_NEWTON {
        let mut g = vec![0.0; d];
        let mut h = Matrix::zeros(d, d);
        let mut obj = 0.0;
        src.for_each(|x, y| obj += logistic_moments(x, y, &theta, &mut g, &mut h));
        obj /= n;
        g.iter_mut().for_each(|v| *v /= n);
        symmetrize_scaled(&mut h, 1.0 / n);
        let gn = norm_inf(&g);
        if gn < LOGISTIC_TOL || iter + 1 == MAX_NEWTON {
            if gn >= 100.0 * LOGISTIC_TOL {
                return Err(Error::NoConvergence { iterations: iter, grad_norm: gn });
            }
            break;
        }
        let dir = newton_direction(&h, &g)?;
        let slope = dot(&g, &dir);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            if objective(&trial) <= obj + 1e-4 * step * slope {
                theta = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            if gn < 100.0 * LOGISTIC_TOL {
                break;
            }
            return Err(Error::NoConvergence { iterations: iter, grad_norm: gn });
        }
    }
    let mut bread = Matrix::zeros(d, d);
    let mut meat = Matrix::zeros(d, d);
    src.for_each(|x, y| {
        for (r, &yi) in x.row_iter().zip(y) {
            let mu = logistic(dot(r, &theta));
            outer_add(&mut bread, r, mu * (1.0 - mu));
            outer_add(&mut meat, r, (mu - yi) * (mu - yi));
        }
    });
    symmetrize_scaled(&mut bread, 1.0);
    let se = sandwich(&Cholesky::new(&bread)?, &mut meat);
    Ok(McTruth { theta, std_error: Some(se), draws: src.n, notes: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_intercept_is_additive_in_p() {
        let e_half = 0.5f64.exp();
        for p in [1, 3] {
            let t = mc_truth(SemiSupSetting::Linear, p, None, 200_000, 9).unwrap();
            let se = t.std_error.as_ref().unwrap();
            let expect = 1.0 + p as f64 * (e_half - 1.0);
            assert!((t.theta[0] - expect).abs() < 4.0 * se[0], "{} vs {expect} (se {})", t.theta[0], se[0]);
        }
    }

    #[test]
    fn quantile_needs_tau_and_caps() {
        assert!(mc_truth(SemiSupSetting::Quantile, 2, None, 20_000, 0).is_err());
        assert!(mc_truth(SemiSupSetting::Linear, 2, None, 100, 0).is_err());
        let t = mc_truth(SemiSupSetting::Quantile, 2, Some(0.5), 20_000, 0).unwrap();
        assert_eq!(t.theta.len(), 3);
        assert!(t.notes.is_empty());
    }

    #[test]
    fn logistic_truth_matches_in_memory_fit() {
        let n = 20_000;
        let t = mc_truth(SemiSupSetting::Logistic, 2, None, n, 4).unwrap();
        let mut rng: WorkRng = rng_from_seed(derive_seed(4, stream::DATA));
        let (x, y) = sample_semisup(SemiSupSetting::Logistic, 2, n, &mut rng);
        let direct = erm(WorkingModel::LogisticReg, &Dataset::labeled(x, y).unwrap()).unwrap();
        for (a, b) in t.theta.iter().zip(&direct.theta) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

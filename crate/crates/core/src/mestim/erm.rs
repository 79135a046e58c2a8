use alloc::vec;
use alloc::vec::Vec;

use super::{Method, ThetaEstimate, WorkingModel};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, least_squares, norm_inf, Cholesky, Matrix};
use crate::synthgen::{logistic, softplus};

pub const LOGISTIC_TOL: f64 = 1e-10;
pub const LOGISTIC_MAX_ITER: usize = 200;
pub const SEPARATION_NORM: f64 = 1e6;
pub const QUANTILE_TOL: f64 = 1e-10;
/// Smoothing levels of the quantile continuation, coarsest first.
pub const QUANTILE_SMOOTHING: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
const QUANTILE_STAGE_ITER: usize = 100;

/// Mean loss `(1/n) Σ l(θ; x̄ᵢ, yᵢ)`; the quantile model uses the exact check loss.
pub fn objective(model: WorkingModel, design: &Matrix, y: &[f64], theta: &[f64]) -> f64 {
    let n = y.len() as f64;
    let total: f64 = design
        .row_iter()
        .zip(y)
        .map(|(x, &yi)| {
            let eta = dot(x, theta);
            match model {
                WorkingModel::LinearReg => 0.5 * (yi - eta) * (yi - eta),
                WorkingModel::LogisticReg => softplus(eta) - yi * eta,
                WorkingModel::QuantileReg(tau) => {
                    let u = yi - eta;
                    (tau - if u < 0.0 { 1.0 } else { 0.0 }) * u
                }
            }
        })
        .sum();
    total / n
}

/// Mean (sub)gradient of [`objective`] with respect to `θ`.
pub fn gradient(model: WorkingModel, design: &Matrix, y: &[f64], theta: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mut g = vec![0.0; theta.len()];
    for (x, &yi) in design.row_iter().zip(y) {
        let eta = dot(x, theta);
        let w = match model {
            WorkingModel::LinearReg => eta - yi,
            WorkingModel::LogisticReg => logistic(eta) - yi,
            WorkingModel::QuantileReg(tau) => (if yi < eta { 1.0 } else { 0.0 }) - tau,
        };
        g.iter_mut().zip(x).for_each(|(gj, xj)| *gj += w * xj);
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

fn validate(model: WorkingModel, design: &Matrix, y: &[f64]) -> Result<()> {
    if design.rows() != y.len() {
        return Err(Error::DimensionMismatch { expected: design.rows(), got: y.len() });
    }
    if design.rows() <= design.cols() {
        return Err(invalid(alloc::format!("ERM needs more rows than parameters ({} <= {})", design.rows(), design.cols())));
    }
    match model {
        WorkingModel::QuantileReg(tau) if !(tau > 0.0 && tau < 1.0) => Err(invalid("quantile level must lie in (0, 1)")),
        WorkingModel::LogisticReg if y.iter().any(|v| !(0.0..=1.0).contains(v)) => {
            Err(Error::InvalidData("logistic labels must lie in [0, 1]".into()))
        }
        _ => Ok(()),
    }
}

/// Empirical risk minimizer over `data` with an intercept column prepended.
///
/// Logistic labels may be soft (any value in `[0, 1]`).
pub fn erm(model: WorkingModel, data: &Dataset) -> Result<ThetaEstimate> {
    let y = data.require_labels()?;
    erm_design(model, &data.design_with_intercept(), y)
}

/// [`erm`] on an explicit design matrix (no intercept is added).
pub fn erm_design(model: WorkingModel, design: &Matrix, y: &[f64]) -> Result<ThetaEstimate> {
    validate(model, design, y)?;
    let (theta, iterations, smoothed_grad) = match model {
        WorkingModel::LinearReg => (least_squares(design, y)?, 1, None),
        WorkingModel::LogisticReg => {
            let (t, it) = logistic_newton(design, y)?;
            (t, it, None)
        }
        WorkingModel::QuantileReg(tau) => {
            let (t, it, g) = quantile_continuation(design, y, tau)?;
            (t, it, Some(g))
        }
    };
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { iterations, grad_norm: f64::NAN });
    }
    // the check loss has no gradient at a vertex; quantile fits report the
    // smoothed-gradient norm reached at the end of the continuation
    let grad_norm = smoothed_grad.unwrap_or_else(|| norm_inf(&gradient(model, design, y, &theta)));
    Ok(ThetaEstimate { objective: objective(model, design, y, &theta), theta, grad_norm, iterations, method: Method::Erm })
}

/// Accumulates the mean gradient and Hessian of the logistic loss.
pub(crate) fn logistic_moments(design: &Matrix, y: &[f64], theta: &[f64], grad: &mut [f64], hess: &mut Matrix) -> f64 {
    let d = theta.len();
    let mut obj = 0.0;
    for (x, &yi) in design.row_iter().zip(y) {
        let eta = dot(x, theta);
        let mu = logistic(eta);
        obj += softplus(eta) - yi * eta;
        let w = mu * (1.0 - mu);
        for a in 0..d {
            grad[a] += (mu - yi) * x[a];
            let wa = w * x[a];
            let row = hess.row_mut(a);
            for b in 0..=a {
                row[b] += wa * x[b];
            }
        }
    }
    obj
}

pub(crate) fn symmetrize_scaled(h: &mut Matrix, scale: f64) {
    let d = h.rows();
    for a in 0..d {
        for b in 0..=a {
            let v = h[(a, b)] * scale;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
}

/// One damped Newton direction `−H⁻¹g`.
pub(crate) fn newton_direction(hess: &Matrix, grad: &[f64]) -> Result<Vec<f64>> {
    let (chol, _) = Cholesky::with_jitter(hess)?;
    Ok(chol.solve(grad).into_iter().map(|v| -v).collect())
}

fn logistic_newton(design: &Matrix, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    let d = design.cols();
    let n = y.len() as f64;
    let mut theta = vec![0.0; d];
    let eval = |t: &[f64]| objective(WorkingModel::LogisticReg, design, y, t);
    for iter in 0..LOGISTIC_MAX_ITER {
        let mut g = vec![0.0; d];
        let mut h = Matrix::zeros(d, d);
        let obj = logistic_moments(design, y, &theta, &mut g, &mut h) / n;
        g.iter_mut().for_each(|v| *v /= n);
        symmetrize_scaled(&mut h, 1.0 / n);
        let gn = norm_inf(&g);
        if gn < LOGISTIC_TOL {
            return separation_check(design, y, theta, iter);
        }
        let dir = newton_direction(&h, &g)?;
        let slope = dot(&g, &dir);
        let mut step = 1.0;
        let mut moved = false;
        if -slope <= 64.0 * f64::EPSILON * (1.0 + obj.abs()) {
            // the objective cannot resolve the predicted decrease: judge the full step by its gradient
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + b).collect();
            if norm_inf(&gradient(WorkingModel::LogisticReg, design, y, &trial)) < gn {
                theta = trial;
                continue;
            }
            if gn < 100.0 * LOGISTIC_TOL {
                return separation_check(design, y, theta, iter);
            }
            return Err(Error::NoConvergence { iterations: iter, grad_norm: gn });
        }
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let f = eval(&trial);
            if f.is_finite() && f <= obj + 1e-4 * step * slope {
                theta = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if norm_inf(&theta) > SEPARATION_NORM {
            return Err(Error::Separation { norm: norm_inf(&theta) });
        }
        if !moved {
            // no representable decrease left: accept if the gradient is at round-off level
            if gn < 100.0 * LOGISTIC_TOL {
                return separation_check(design, y, theta, iter);
            }
            return Err(Error::NoConvergence { iterations: iter, grad_norm: gn });
        }
    }
    let g = gradient(WorkingModel::LogisticReg, design, y, &theta);
    if norm_inf(&theta) > SEPARATION_NORM {
        return Err(Error::Separation { norm: norm_inf(&theta) });
    }
    if norm_inf(&g) < LOGISTIC_TOL {
        return separation_check(design, y, theta, LOGISTIC_MAX_ITER);
    }
    Err(Error::NoConvergence { iterations: LOGISTIC_MAX_ITER, grad_norm: norm_inf(&g) })
}

/// With hard labels, a solution that puts every row strictly on its own side
/// of the boundary certifies complete separation: the likelihood then has no
/// finite maximizer and the "converged" point is an artifact of the tolerance.
fn separation_check(design: &Matrix, y: &[f64], theta: Vec<f64>, iter: usize) -> Result<(Vec<f64>, usize)> {
    let hard = y.iter().all(|&v| v == 0.0 || v == 1.0);
    let separated = hard
        && design.row_iter().zip(y).all(|(x, &yi)| {
            let eta = dot(x, &theta);
            if yi == 1.0 {
                eta > 0.0
            } else {
                eta < 0.0
            }
        });
    if separated {
        return Err(Error::Separation { norm: norm_inf(&theta) });
    }
    Ok((theta, iter))
}

/// Smoothed pinball objective `(1/n) Σ (τ−½)u + ½√(u²+ε²)` with `u = y − x̄ᵀθ`,
/// its gradient, and its Hessian.
fn smoothed_quantile(design: &Matrix, y: &[f64], theta: &[f64], tau: f64, eps: f64) -> (f64, Vec<f64>, Matrix) {
    let d = theta.len();
    let n = y.len() as f64;
    let mut obj = 0.0;
    let mut g = vec![0.0; d];
    let mut h = Matrix::zeros(d, d);
    for (x, &yi) in design.row_iter().zip(y) {
        let u = yi - dot(x, theta);
        let s = (u * u + eps * eps).sqrt();
        obj += (tau - 0.5) * u + 0.5 * s;
        let d1 = (tau - 0.5) + 0.5 * u / s;
        let d2 = 0.5 * eps * eps / (s * s * s);
        for a in 0..d {
            g[a] -= d1 * x[a];
            let wa = d2 * x[a];
            let row = h.row_mut(a);
            for b in 0..=a {
                row[b] += wa * x[b];
            }
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    symmetrize_scaled(&mut h, 1.0 / n);
    (obj / n, g, h)
}

fn smoothed_value(design: &Matrix, y: &[f64], theta: &[f64], tau: f64, eps: f64) -> f64 {
    let n = y.len() as f64;
    design
        .row_iter()
        .zip(y)
        .map(|(x, &yi)| {
            let u = yi - dot(x, theta);
            (tau - 0.5) * u + 0.5 * (u * u + eps * eps).sqrt()
        })
        .sum::<f64>()
        / n
}

fn quantile_continuation(design: &Matrix, y: &[f64], tau: f64) -> Result<(Vec<f64>, usize, f64)> {
    let mut theta = least_squares(design, y)?;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for &eps in &QUANTILE_SMOOTHING {
        for _ in 0..QUANTILE_STAGE_ITER {
            let (obj, g, h) = smoothed_quantile(design, y, &theta, tau, eps);
            grad_norm = norm_inf(&g);
            if grad_norm < QUANTILE_TOL {
                break;
            }
            let dir = newton_direction(&h, &g)?;
            let slope = dot(&g, &dir);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
                if smoothed_value(design, y, &trial, tau, eps) <= obj + 1e-4 * step * slope {
                    theta = trial;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if !moved {
                break;
            }
        }
    }
    Ok((polish_vertex(design, y, tau, theta), iterations, grad_norm))
}

/// Snap to the exact interpolating solution through the `p + 1` rows with the
/// smallest residuals when that does not increase the check loss.
fn polish_vertex(design: &Matrix, y: &[f64], tau: f64, theta: Vec<f64>) -> Vec<f64> {
    let d = theta.len();
    let mut idx: Vec<usize> = (0..y.len()).collect();
    let resid: Vec<f64> = design.row_iter().zip(y).map(|(x, yi)| (yi - dot(x, &theta)).abs()).collect();
    idx.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));
    idx.truncate(d);
    let basis = Matrix::from_fn(d, d, |i, j| design[(idx[i], j)]);
    let rhs: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let model = WorkingModel::QuantileReg(tau);
    match least_squares(&basis, &rhs) {
        Ok(vertex) if objective(model, design, y, &vertex) <= objective(model, design, y, &theta) => vertex,
        _ => theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn exact_line() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 + 3.0 * r[0]).collect();
        let e = erm(WorkingModel::LinearReg, &Dataset::from_rows(&rows, Some(y)).unwrap()).unwrap();
        assert!((e.theta[0] - 2.0).abs() < 1e-10 && (e.theta[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_logistic_pairs() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for x in [0.5, 1.0, -2.0, 0.3] {
            rows.push(vec![x]);
            y.push(1.0);
            rows.push(vec![-x]);
            y.push(0.0);
        }
        // overlapping pairs keep the problem non-separable
        rows.push(vec![0.2]);
        y.push(0.0);
        rows.push(vec![-0.2]);
        y.push(1.0);
        let e = erm(WorkingModel::LogisticReg, &Dataset::from_rows(&rows, Some(y)).unwrap()).unwrap();
        assert!(e.theta[0].abs() < 1e-10);
        assert!(e.grad_norm < 1e-10);
    }

    #[test]
    fn separable_logistic_is_detected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i >= 5) as u8 as f64).collect();
        let r = erm(WorkingModel::LogisticReg, &Dataset::from_rows(&rows, Some(y)).unwrap());
        assert!(matches!(r, Err(Error::Separation { .. })), "{r:?}");
    }

    #[test]
    fn median_of_three() {
        let design = Matrix::from_vec(3, 1, vec![1.0; 3]).unwrap();
        let y = [1.0, 2.0, 9.0];
        let e = erm_design(WorkingModel::QuantileReg(0.5), &design, &y).unwrap();
        // brute-force scan of the check loss over a value grid
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=1000 {
            let t = k as f64 * 0.01;
            let v = objective(WorkingModel::QuantileReg(0.5), &design, &y, &[t]);
            if v < best.0 {
                best = (v, t);
            }
        }
        assert_eq!(best.1, 2.0);
        assert!((e.theta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_balance_and_local_minimum() {
        let mut rng = rng_from_seed(3);
        for tau in [0.25, 0.5, 0.8] {
            let n = 200;
            let x = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = x.row_iter().map(|r| r[0] - r[2] + rng.random_range(-1.0..1.0)).collect();
            let d = Dataset::labeled(x, y.clone()).unwrap();
            let e = erm(WorkingModel::QuantileReg(tau), &d).unwrap();
            let design = d.design_with_intercept();
            let below = design.row_iter().zip(&y).filter(|(r, yi)| **yi - dot(r, &e.theta) < 0.0).count() as f64 / n as f64;
            let slack = 5.0 / n as f64;
            assert!(below >= tau - slack && below <= tau + slack, "tau {tau}: {below}");
            for j in 0..4 {
                for delta in [1e-4, -1e-4] {
                    let mut t = e.theta.clone();
                    t[j] += delta;
                    assert!(e.objective <= objective(WorkingModel::QuantileReg(tau), &design, &y, &t));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], Some(vec![1.0, 2.0])).unwrap();
        assert!(erm(WorkingModel::LinearReg, &d).is_err());
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], Some(vec![1.0, 2.0, 0.0])).unwrap();
        assert!(erm(WorkingModel::LogisticReg, &d).is_err());
        assert!(erm(WorkingModel::QuantileReg(1.0), &d).is_err());
    }
}

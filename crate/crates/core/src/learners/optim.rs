//! Box-constrained quasi-Newton minimization.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Minimize `f` over the box with projected BFGS and Armijo backtracking.
/// `f` returns `None` where the objective is undefined; the line search
/// treats such points as infinitely bad.
pub(crate) fn minimize_box<F>(mut f: F, x0: &[f64], bounds: &[(f64, f64)], max_iter: usize) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x)?;
    let mut h = identity(n);
    const MAX_STEP: f64 = 3.0;

    for _ in 0..max_iter {
        let pg = projected_gradient(&x, &g, bounds);
        if pg.iter().all(|v| v.abs() < 1e-9) {
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        for i in 0..n {
            let (lo, hi) = bounds[i];
            if (x[i] <= lo && d[i] < 0.0) || (x[i] >= hi && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if crate::linalg::dot(&d, &g) >= 0.0 {
            h = identity(n);
            d = pg.iter().map(|v| -v).collect();
        }
        let big = crate::linalg::norm_inf(&d);
        if big > MAX_STEP {
            d.iter_mut().for_each(|v| *v *= MAX_STEP / big);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut trial, bounds);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = crate::linalg::dot(&g, &moved);
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else { break };
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = crate::linalg::dot(&s, &y);
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let done = (fx - fnew).abs() <= 1e-12 * (1.0 + fx.abs());
        x = xn;
        fx = fnew;
        g = gnew;
        if done {
            break;
        }
    }
    Some(Minimum { x, value: fx })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// Inverse-Hessian update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = crate::linalg::dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

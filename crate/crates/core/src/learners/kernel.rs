//! Stationary kernels parameterized on the log scale.
//!
//! Every family is a constant amplitude times an isotropic base kernel, so a
//! kernel value depends on two inputs only through their Euclidean distance.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// Bound on every log-amplitude parameter.
pub const LOG_AMPLITUDE_BOUND: f64 = 5.0;
/// Bound on log length-scales, periods and mixture shapes.
pub const LOG_SCALE_BOUND: f64 = 11.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    ConstRbf,
    /// Matérn with smoothness 3/2.
    ConstMatern,
    ConstRatQuad,
    ConstExpSine,
    ConstRbfPlusConstMatern,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        Self::ConstRbf,
        Self::ConstMatern,
        Self::ConstRatQuad,
        Self::ConstExpSine,
        Self::ConstRbfPlusConstMatern,
    ];

    /// Parameter count; parameters are `log c, log ℓ[, log α | log P]`,
    /// and the sum family concatenates its two parts.
    pub fn n_params(self) -> usize {
        match self {
            Self::ConstRbf | Self::ConstMatern => 2,
            Self::ConstRatQuad | Self::ConstExpSine => 3,
            Self::ConstRbfPlusConstMatern => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::ConstRbf => "const*rbf",
            Self::ConstMatern => "const*matern",
            Self::ConstRatQuad => "const*ratquad",
            Self::ConstExpSine => "const*expsine",
            Self::ConstRbfPlusConstMatern => "const*rbf+const*matern",
        }
    }

    /// Box constraints on the log-parameters.
    pub fn bounds(self) -> Vec<(f64, f64)> {
        let amp = (-LOG_AMPLITUDE_BOUND, LOG_AMPLITUDE_BOUND);
        let scale = (-LOG_SCALE_BOUND, LOG_SCALE_BOUND);
        match self {
            Self::ConstRbf | Self::ConstMatern => alloc::vec![amp, scale],
            Self::ConstRatQuad | Self::ConstExpSine => alloc::vec![amp, scale, scale],
            Self::ConstRbfPlusConstMatern => alloc::vec![amp, scale, amp, scale],
        }
    }

    /// Default starting point: unit amplitudes, length-scales and shapes.
    pub fn default_params(self) -> Vec<f64> {
        alloc::vec![0.0; self.n_params()]
    }
}

impl FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|f| f.label() == key)
            .ok_or_else(|| invalid(alloc::format!("unknown kernel family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub log_params: Vec<f64>,
}

fn rbf(c: f64, l: f64, d2: f64, grad: Option<&mut [f64]>) -> f64 {
    let r = d2 / (l * l);
    let k = c * (-0.5 * r).exp();
    if let Some(g) = grad {
        g[0] = k;
        g[1] = k * r;
    }
    k
}

fn matern32(c: f64, l: f64, d2: f64, grad: Option<&mut [f64]>) -> f64 {
    let a = 3f64.sqrt() * d2.sqrt() / l;
    let e = (-a).exp();
    let k = c * (1.0 + a) * e;
    if let Some(g) = grad {
        g[0] = k;
        g[1] = c * a * a * e;
    }
    k
}

impl Kernel {
    pub fn new(family: KernelFamily, log_params: Vec<f64>) -> Result<Self> {
        if log_params.len() != family.n_params() {
            return Err(Error::DimensionMismatch { expected: family.n_params(), got: log_params.len() });
        }
        if log_params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel parameters must be finite"));
        }
        Ok(Kernel { family, log_params })
    }

    /// Kernel value at squared distance `d2`; when `grad` is given it
    /// receives the derivatives with respect to each log-parameter.
    pub fn eval_d2(&self, d2: f64, grad: Option<&mut [f64]>) -> f64 {
        let p: Vec<f64> = self.log_params.iter().map(|v| v.exp()).collect();
        match self.family {
            KernelFamily::ConstRbf => rbf(p[0], p[1], d2, grad),
            KernelFamily::ConstMatern => matern32(p[0], p[1], d2, grad),
            KernelFamily::ConstRatQuad => {
                let (c, l, alpha) = (p[0], p[1], p[2]);
                let u = 1.0 + d2 / (2.0 * alpha * l * l);
                let k = c * u.powf(-alpha);
                if let Some(g) = grad {
                    g[0] = k;
                    g[1] = 2.0 * alpha * k * (u - 1.0) / u;
                    g[2] = alpha * k * ((u - 1.0) / u - u.ln());
                }
                k
            }
            KernelFamily::ConstExpSine => {
                let (c, l, period) = (p[0], p[1], p[2]);
                let d = d2.sqrt();
                let arg = PI * d / period;
                let s = arg.sin();
                let k = c * (-2.0 * s * s / (l * l)).exp();
                if let Some(g) = grad {
                    g[0] = k;
                    g[1] = k * 4.0 * s * s / (l * l);
                    g[2] = k * 4.0 * s * arg.cos() * arg / (l * l);
                }
                k
            }
            KernelFamily::ConstRbfPlusConstMatern => match grad {
                Some(g) => {
                    let (ga, gb) = g.split_at_mut(2);
                    rbf(p[0], p[1], d2, Some(ga)) + matern32(p[2], p[3], d2, Some(gb))
                }
                None => rbf(p[0], p[1], d2, None) + matern32(p[2], p[3], d2, None),
            },
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_d2(squared_distance(a, b), None)
    }

    /// Prior variance `k(x, x)`.
    pub fn diag(&self) -> f64 {
        self.eval_d2(0.0, None)
    }

    /// Gram matrix between the rows of `a` and `b`.
    pub fn gram(&self, a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.rows(), |i, j| self.eval(a.row(i), b.row(j)))
    }
}

/// Unit-amplitude RBF kernel `exp(−‖a−b‖²/(2ℓ²))` with a fixed length-scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub lengthscale: f64,
}

impl RbfKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-squared_distance(a, b) / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    pub fn gram(&self, a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.rows(), |i, j| self.eval(a.row(i), b.row(j)))
    }
}

/// Median of the pairwise Euclidean distances between distinct rows.
pub fn median_heuristic(x: &Matrix) -> Result<f64> {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(squared_distance(x.row(i), x.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return Err(invalid("median heuristic needs at least two rows"));
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if !(med > 0.0) {
        return Err(invalid("median pairwise distance is zero"));
    }
    Ok(med)
}

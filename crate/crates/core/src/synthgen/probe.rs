use alloc::vec::Vec;
use core::str::FromStr;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const PROBE_NOISE_SD: f64 = 0.05;
/// Evaluation points per axis on `[-4, 4]`.
pub const EVAL_POINTS_1D: usize = 161;
pub const EVAL_POINTS_2D: usize = 41;
const PIECES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    Linear1D,
    Quad1D,
    Step1D,
    PiecewiseLinear1D,
    Linear2D,
    Quad2D,
    Step2D,
    Bilinear2D,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 8] = [
        Self::Linear1D,
        Self::Quad1D,
        Self::Step1D,
        Self::PiecewiseLinear1D,
        Self::Linear2D,
        Self::Quad2D,
        Self::Step2D,
        Self::Bilinear2D,
    ];

    pub fn dim(self) -> usize {
        match self {
            Self::Linear1D | Self::Quad1D | Self::Step1D | Self::PiecewiseLinear1D => 1,
            _ => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Linear1D => "linear1d",
            Self::Quad1D => "quad1d",
            Self::Step1D => "step1d",
            Self::PiecewiseLinear1D => "piecewise1d",
            Self::Linear2D => "linear2d",
            Self::Quad2D => "quad2d",
            Self::Step2D => "step2d",
            Self::Bilinear2D => "bilinear2d",
        }
    }
}

impl FromStr for ProbeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.label() == key)
            .ok_or_else(|| invalid(alloc::format!("unknown probe kind `{s}`")))
    }
}

/// The noiseless function behind a probe. Random shapes carry their drawn parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeFunction {
    Linear1D,
    Quad1D,
    Step1D,
    /// Values at the knots `-1, -0.5, 0, 0.5, 1`; linear in between and
    /// extended linearly beyond the end knots.
    PiecewiseLinear1D { knot_values: [f64; PIECES + 1] },
    Linear2D,
    Quad2D,
    Step2D,
    /// Vertex values `grid[i][j]` at `(-1 + i/2, -1 + j/2)` over the 4×4 cells of `[-1, 1]²`.
    Bilinear2D { grid: [[f64; PIECES + 1]; PIECES + 1] },
}

/// Cell index and local coordinate of `x` on the 4-cell partition of `[-1, 1]`.
/// Points outside fall in the nearest end cell with a local coordinate outside `[0, 1]`.
fn locate(x: f64) -> (usize, f64) {
    let scaled = PIECES as f64 * (x + 1.0) / 2.0;
    let cell = scaled.floor().max(0.0).min((PIECES - 1) as f64);
    (cell as usize, scaled - cell)
}

impl ProbeFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear1D => x[0],
            Self::Quad1D => x[0] * x[0],
            Self::Step1D => {
                if x[0] >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::PiecewiseLinear1D { knot_values } => {
                let (i, t) = locate(x[0]);
                knot_values[i] * (1.0 - t) + knot_values[i + 1] * t
            }
            Self::Linear2D => x[0] + x[1],
            Self::Quad2D => x[0] * x[0] + x[1] * x[1],
            Self::Step2D => {
                if x[0] < 0.0 && x[1] < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            Self::Bilinear2D { grid } => {
                let (i, u) = locate(x[0]);
                let (j, v) = locate(x[1]);
                grid[i][j] * (1.0 - u) * (1.0 - v)
                    + grid[i + 1][j] * u * (1.0 - v)
                    + grid[i][j + 1] * (1.0 - u) * v
                    + grid[i + 1][j + 1] * u * v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionProbe {
    pub kind: ProbeKind,
    pub train: Dataset,
    pub eval_grid: Dataset,
    pub truth: ProbeFunction,
    pub noise_sd: f64,
}

impl FunctionProbe {
    /// Whether an evaluation point lies in the training box `[-1, 1]^d`.
    pub fn is_interpolation(x: &[f64]) -> bool {
        x.iter().all(|v| (-1.0..=1.0).contains(v))
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn draw_truth<R: Rng + ?Sized>(kind: ProbeKind, rng: &mut R) -> ProbeFunction {
    match kind {
        ProbeKind::Linear1D => ProbeFunction::Linear1D,
        ProbeKind::Quad1D => ProbeFunction::Quad1D,
        ProbeKind::Step1D => ProbeFunction::Step1D,
        ProbeKind::PiecewiseLinear1D => {
            let width = 2.0 / PIECES as f64;
            let mut knot_values = [0.0; PIECES + 1];
            knot_values[0] = rng.random_range(-1.0..1.0);
            for k in 0..PIECES {
                let slope: f64 = rng.random_range(-2.0..2.0);
                knot_values[k + 1] = knot_values[k] + slope * width;
            }
            ProbeFunction::PiecewiseLinear1D { knot_values }
        }
        ProbeKind::Linear2D => ProbeFunction::Linear2D,
        ProbeKind::Quad2D => ProbeFunction::Quad2D,
        ProbeKind::Step2D => ProbeFunction::Step2D,
        ProbeKind::Bilinear2D => {
            let mut grid = [[0.0; PIECES + 1]; PIECES + 1];
            for row in grid.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            ProbeFunction::Bilinear2D { grid }
        }
    }
}

/// `n` training inputs (1D) or an `n × n` mesh of per-axis uniform draws (2D).
pub fn gen_function_probe(kind: ProbeKind, n: usize, seed: u64) -> Result<FunctionProbe> {
    if n < 2 {
        return Err(invalid("probe needs n >= 2 (per axis in 2D)"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let truth = draw_truth(kind, &mut rng);
    let noise = Normal::new(0.0, PROBE_NOISE_SD).expect("positive sd");
    let (train_x, eval_x) = match kind.dim() {
        1 => {
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (Matrix::from_vec(n, 1, xs)?, Matrix::from_vec(EVAL_POINTS_1D, 1, linspace(-4.0, 4.0, EVAL_POINTS_1D))?)
        }
        _ => {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let g = linspace(-4.0, 4.0, EVAL_POINTS_2D);
            (
                Matrix::from_fn(n * n, 2, |r, c| if c == 0 { a[r / n] } else { b[r % n] }),
                Matrix::from_fn(g.len() * g.len(), 2, |r, c| if c == 0 { g[r / g.len()] } else { g[r % g.len()] }),
            )
        }
    };
    let mut noise_rng = rng_from_seed(derive_seed(seed, stream::NOISE));
    let y = train_x.row_iter().map(|r| truth.eval(r) + noise.sample(&mut noise_rng)).collect();
    Ok(FunctionProbe {
        kind,
        train: Dataset::labeled(train_x, y)?,
        eval_grid: Dataset::unlabeled(eval_x)?,
        truth,
        noise_sd: PROBE_NOISE_SD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_at_zero_is_positive() {
        assert_eq!(ProbeFunction::Step1D.eval(&[0.0]), 1.0);
        assert_eq!(ProbeFunction::Step2D.eval(&[0.0, -1.0]), 1.0);
        assert_eq!(ProbeFunction::Step2D.eval(&[-0.1, -1.0]), -1.0);
    }

    #[test]
    fn quad2d_corner() {
        assert_eq!(ProbeFunction::Quad2D.eval(&[1.0, 1.0]), 2.0);
    }

    #[test]
    fn constant_bilinear_grid_is_constant() {
        let f = ProbeFunction::Bilinear2D { grid: [[0.7; 5]; 5] };
        for x in linspace(-1.0, 1.0, 17) {
            for y in linspace(-1.0, 1.0, 13) {
                assert!((f.eval(&[x, y]) - 0.7).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bilinear_hits_vertices() {
        let mut grid = [[0.0; 5]; 5];
        for (i, row) in grid.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (i * 5 + j) as f64;
            }
        }
        let f = ProbeFunction::Bilinear2D { grid };
        for i in 0..5 {
            for j in 0..5 {
                let x = [-1.0 + i as f64 * 0.5, -1.0 + j as f64 * 0.5];
                assert!((f.eval(&x) - grid[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn piecewise_linear_is_continuous() {
        let p = gen_function_probe(ProbeKind::PiecewiseLinear1D, 10, 3).unwrap();
        for k in [-0.5, 0.0, 0.5] {
            let l = p.truth.eval(&[k - 1e-9]);
            let r = p.truth.eval(&[k + 1e-9]);
            assert!((l - r).abs() < 1e-7);
        }
    }

    #[test]
    fn shapes_and_ranges() {
        let p = gen_function_probe(ProbeKind::Quad2D, 5, 1).unwrap();
        assert_eq!(p.train.n(), 25);
        assert_eq!(p.eval_grid.n(), EVAL_POINTS_2D * EVAL_POINTS_2D);
        assert!(p.train.features().as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        let g = p.eval_grid.features().as_slice();
        assert_eq!(g.iter().cloned().fold(f64::INFINITY, f64::min), -4.0);
        assert_eq!(g.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 4.0);
        assert!(gen_function_probe(ProbeKind::Linear1D, 1, 0).is_err());
    }
}

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Feature matrix plus optional labels; the sample container used everywhere.
///
/// Construction validates that all entries are finite and that the label
/// vector, when present, has one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Option<Vec<f64>>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::InvalidData(format!(
                "need n >= 1 and p >= 1, got {}x{}",
                features.rows(),
                features.cols()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidData("non-finite feature entry".into()));
        }
        if let Some(y) = &labels {
            if y.len() != features.rows() {
                return Err(Error::DimensionMismatch { expected: features.rows(), got: y.len() });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("non-finite label".into()));
            }
        }
        Ok(Dataset { features, labels })
    }

    pub fn labeled(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        Dataset::new(features, Some(labels))
    }

    pub fn unlabeled(features: Matrix) -> Result<Self> {
        Dataset::new(features, None)
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<f64>>) -> Result<Self> {
        Dataset::new(Matrix::from_rows(rows)?, labels)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    /// Labels, or an error naming the caller's need for them.
    pub fn require_labels(&self) -> Result<&[f64]> {
        self.labels.as_deref().ok_or_else(|| Error::InvalidData("dataset has no labels".into()))
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset { features: self.features.clone(), labels: None }
    }

    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), Some(labels))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let p = self.p();
        let mut data = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let features = Matrix::from_vec(idx.len(), p, data).expect("row selection keeps shape");
        let labels = self.labels.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect());
        Dataset { features, labels }
    }

    /// Stack two datasets sharing `p`; labels are kept only when both carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.p() != other.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), got: other.p() });
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let features = Matrix::from_vec(self.n() + other.n(), self.p(), data)?;
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Dataset { features, labels })
    }

    /// Copy with a column prepended (e.g. the treatment indicator).
    pub fn prepend_column(&self, col: &[f64]) -> Result<Dataset> {
        if col.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: col.len() });
        }
        let p = self.p() + 1;
        let features = Matrix::from_fn(self.n(), p, |i, j| if j == 0 { col[i] } else { self.features[(i, j - 1)] });
        Dataset::new(features, self.labels.clone())
    }

    /// Copy with one column overwritten by `value`.
    pub fn with_column_value(&self, j: usize, value: f64) -> Dataset {
        let mut features = self.features.clone();
        for i in 0..features.rows() {
            features[(i, j)] = value;
        }
        Dataset { features, labels: self.labels.clone() }
    }

    /// Design matrix `[1, X]` with a leading intercept column.
    pub fn design_with_intercept(&self) -> Matrix {
        Matrix::from_fn(self.n(), self.p() + 1, |i, j| if j == 0 { 1.0 } else { self.features[(i, j - 1)] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        let m = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(Dataset::unlabeled(m).is_err());
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            Dataset::labeled(m, vec![1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(Dataset::unlabeled(Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn concat_and_select() {
        let a = Dataset::from_rows(&[vec![1.0], vec![2.0]], Some(vec![10.0, 20.0])).unwrap();
        let b = Dataset::from_rows(&[vec![3.0]], Some(vec![30.0])).unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.labels().unwrap(), &[10.0, 20.0, 30.0]);
        let s = c.select_rows(&[2, 0]);
        assert_eq!(s.row(0), &[3.0]);
        assert_eq!(s.labels().unwrap(), &[30.0, 10.0]);
        let u = a.concat(&b.without_labels()).unwrap();
        assert!(u.labels().is_none());
    }
}

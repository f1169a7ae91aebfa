//! Column statistics over sets of feature vectors.
//!
//! All statistics use the population convention (divisor `n`).

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;

/// Diagonal regularization added to covariance matrices before inversion.
pub const COVARIANCE_EPSILON: f64 = 1e-6;

/// Per-column mean, standard deviation and mean absolute deviation about the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub mad: Vec<T>,
    pub count: usize,
}

impl<T: Scalar> ColumnStats<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_rows<T, R: AsRef<[T]>>(rows: &[R]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: rows.len(),
        });
    }
    let dim = rows[0].as_ref().len();
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }
    Ok(dim)
}

pub fn column_means<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Vec<T> {
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    let n = T::from_usize_lossy(rows.len());
    let mut mean = vec![T::zero(); dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

pub fn column_stats<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Result<ColumnStats<T>> {
    let dim = check_rows(rows)?;
    let n = T::from_usize_lossy(rows.len());
    let mean = column_means(rows);
    let mut var = vec![T::zero(); dim];
    let mut mad = vec![T::zero(); dim];
    for r in rows {
        for (i, &v) in r.as_ref().iter().enumerate() {
            let d = v - mean[i];
            var[i] += d * d;
            mad[i] += d.abs();
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    mad.iter_mut().for_each(|a| *a /= n);
    Ok(ColumnStats {
        mean,
        std,
        mad,
        count: rows.len(),
    })
}

/// Population covariance matrix (unregularized).
pub fn covariance_matrix<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Result<SquareMatrix<T>> {
    let dim = check_rows(rows)?;
    let n = T::from_usize_lossy(rows.len());
    let mean = column_means(rows);
    let mut cov = SquareMatrix::zeros(dim);
    let mut centered = vec![T::zero(); dim];
    for r in rows {
        for ((c, &v), &m) in centered.iter_mut().zip(r.as_ref()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Per-column z-scaling fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    /// Column standard deviations, floored at [`STANDARDIZE_FLOOR`].
    pub scale: Vec<T>,
}

pub const STANDARDIZE_FLOOR: f64 = 1e-6;

impl<T: Scalar> Standardizer<T> {
    pub fn fit<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let stats = column_stats(rows)?;
        let floor = T::lit(STANDARDIZE_FLOOR);
        Ok(Self {
            mean: stats.mean,
            scale: stats.std.into_iter().map(|s| s.max(floor)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn transform_all<R: AsRef<[T]>>(&self, rows: &[R]) -> Vec<Vec<T>> {
        rows.iter().map(|r| self.transform(r.as_ref())).collect()
    }
}

/// Mean and population standard deviation of a slice. Returns `(0, 0)` when empty.
pub fn mean_and_sd<T: Scalar>(values: &[T]) -> (T, T) {
    if values.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn constant_column() {
        let s = column_stats(&[vec![1.0, 5.0], vec![1.0, 7.0]]).unwrap();
        assert_eq!((s.mean[0], s.std[0], s.mad[0]), (1.0, 0.0, 0.0));
    }

    #[test]
    fn two_values() {
        let s = column_stats(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!((s.mean[0], s.std[0], s.mad[0]), (2.0, 1.0, 1.0));
    }

    #[test]
    fn three_values() {
        let s = column_stats(&[vec![0.0], vec![0.0], vec![3.0]]).unwrap();
        assert!(close(s.mean[0], 1.0));
        assert!(close(s.std[0], 2.0_f64.sqrt()));
        assert!(close(s.mad[0], 4.0 / 3.0));
        assert_eq!(s.count, 3);
    }

    #[test]
    fn fewer_than_two_rows() {
        let err = column_stats::<f64, _>(&[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 2, got: 1 }));
        assert!(covariance_matrix::<f64, Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn ragged_rows() {
        assert!(matches!(
            column_stats(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn toy_covariance() {
        let cov = covariance_matrix(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(cov.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn identical_rows_give_zero_covariance() {
        let rows = vec![vec![0.25; 4]; 5];
        let cov = covariance_matrix(&rows).unwrap();
        assert!(cov.as_slice().iter().all(|&v| v == 0.0));
        let reg = cov.with_added_diagonal(COVARIANCE_EPSILON);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(reg[(i, j)], if i == j { COVARIANCE_EPSILON } else { 0.0 });
            }
        }
    }

    #[test]
    fn standardized_training_columns_are_unit() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0, 2.0], vec![3.0, 7.0, 2.0], vec![8.0, 6.5, 2.0]];
        let st = Standardizer::fit(&rows).unwrap();
        let z = st.transform_all(&rows);
        let s = column_stats(&z).unwrap();
        for c in 0..2 {
            assert!(s.mean[c].abs() < 1e-9);
            assert!((s.std[c] - 1.0).abs() < 1e-6);
        }
        assert_eq!(st.scale[2], STANDARDIZE_FLOOR);
    }

    #[test]
    fn works_in_f32() {
        let s = column_stats(&[vec![1.0_f32], vec![3.0]]).unwrap();
        assert_eq!(s.std[0], 1.0_f32);
    }
}

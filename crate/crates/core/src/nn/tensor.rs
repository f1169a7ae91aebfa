use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tensor entries must be finite".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// Stacks equally sized rows into a `[rows.len(), sample_shape...]` batch.
    pub fn stack<R: AsRef<[T]>>(rows: &[R], sample_shape: &[usize]) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(rows.len() * per);
        for r in rows {
            let r = r.as_ref();
            if r.len() != per {
                return Err(Error::ShapeMismatch(format!("row of length {} for sample shape {sample_shape:?}", r.len())));
            }
            data.extend_from_slice(r);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(sample_shape);
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size of the leading dimension.
    pub fn batch_len(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// The `i`-th slice along the leading dimension.
    pub fn sample(&self, i: usize) -> &[T] {
        let per = self.data.len() / self.batch_len().max(1);
        &self.data[i * per..(i + 1) * per]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_length() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]), Err(Error::ShapeMismatch(_))));
        assert!(Tensor::<f64>::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn stack_and_slice() {
        let t = Tensor::stack(&[vec![1.0, 2.0], vec![3.0, 4.0]], &[1, 2]).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2]);
        assert_eq!(t.sample(1), &[3.0, 4.0]);
    }
}

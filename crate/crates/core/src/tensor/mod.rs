//! Dense row-major tensors and the numeric kernels built on them.
//!
//! Tensors hold `f64`. Convolution is cross-correlation with zero padding;
//! the hot path lowers each image to a patch matrix and hands it to a
//! blocked GEMM, optionally in `f32` (see [`Precision`]).

mod conv;
mod gradcheck;
mod matmul;

pub use conv::{
    col2im, conv2d_backward, conv2d_forward, conv2d_forward_cached, conv2d_forward_cached_with,
    conv2d_forward_with, conv_output_extent, im2col, Conv2dCache, Conv2dGrads, ConvGeometry,
    Precision,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use matmul::{gemm, matmul, MatrixView, Scalar};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape("Tensor::new", shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                dim: "element count",
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If `shape` is empty or has a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    /// If `shape` is empty or has a zero extent.
    pub fn full(shape: &[usize], value: f64) -> Self {
        check_shape("Tensor::full", shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    /// Flat offset of a multi-index, or `None` when out of range.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return None;
            }
            flat = flat * extent + i;
        }
        Some(flat)
    }

    /// Inverse of [`Tensor::offset`].
    pub fn unravel(&self, mut flat: usize) -> Option<Vec<usize>> {
        if flat >= self.data.len() {
            return None;
        }
        let mut index = vec![0; self.shape.len()];
        for (slot, &extent) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % extent;
            flat /= extent;
        }
        Some(index)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.offset(index).map(|i| self.data[i])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape("reshape", shape)?;
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                dim: "element count",
                expected: self.data.len(),
                actual: n,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::InvalidShape {
                op,
                reason: format!("expected a rank-4 tensor, got shape {:?}", self.shape),
            }),
        }
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::InvalidShape {
                op,
                reason: format!("expected a rank-2 tensor, got shape {:?}", self.shape),
            }),
        }
    }

    /// Rejects NaN/Inf, reporting the multi-index of the first offender.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                location: format!("{what}{:?}", self.unravel(i).unwrap_or_default()),
                value: self.data[i],
            }),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::InvalidShape {
                op: "add_assign",
                reason: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

fn check_shape(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            op,
            reason: "rank must be at least 1".into(),
        });
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(Error::InvalidShape {
            op,
            reason: format!("extent of axis {axis} is zero in {shape:?}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_extent_and_wrong_length() {
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[], vec![1.0]).is_err());
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(Error::ShapeMismatch { expected: 6, actual: 5, .. })
        ));
    }

    #[test]
    fn offset_is_row_major_and_bijective() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.strides(), vec![12, 4, 1]);
        assert_eq!(t.offset(&[1, 2, 3]), Some(23));
        assert_eq!(t.offset(&[0, 3, 0]), None);
        let mut seen = vec![false; t.len()];
        for flat in 0..t.len() {
            let idx = t.unravel(flat).unwrap();
            assert_eq!(t.offset(&idx), Some(flat));
            seen[flat] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn check_finite_reports_index() {
        let mut t = Tensor::zeros(&[2, 2]);
        t.data_mut()[3] = f64::NAN;
        let err = t.check_finite("x").unwrap_err().to_string();
        assert!(err.contains("x[1, 1]"), "{err}");
    }
}

use std::borrow::Cow;

use faer::linalg::matmul::matmul as faer_matmul;
use faer::{Accum, MatMut, MatRef, Par};

use super::Tensor;
use crate::error::{Error, Result};

mod sealed {
    pub trait Sealed {}
    impl Sealed for f32 {}
    impl Sealed for f64 {}
}

/// Element type of a matrix product: `f64`, or `f32` for the reduced
/// precision convolution path.
pub trait Scalar: sealed::Sealed + Copy + PartialEq + std::ops::MulAssign + Send + Sync + 'static {
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Borrows when no conversion is needed.
    fn cast_slice(values: &[f64]) -> Cow<'_, [Self]>;
    #[doc(hidden)]
    fn product(c: MatMut<'_, Self>, accum: Accum, a: MatRef<'_, Self>, b: MatRef<'_, Self>);
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn cast_slice(values: &[f64]) -> Cow<'_, [Self]> {
        Cow::Borrowed(values)
    }
    fn product(c: MatMut<'_, Self>, accum: Accum, a: MatRef<'_, Self>, b: MatRef<'_, Self>) {
        faer_matmul(c, accum, a, b, 1.0, Par::Seq);
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    fn cast_slice(values: &[f64]) -> Cow<'_, [Self]> {
        Cow::Owned(values.iter().map(|&v| v as f32).collect())
    }
    fn product(c: MatMut<'_, Self>, accum: Accum, a: MatRef<'_, Self>, b: MatRef<'_, Self>) {
        faer_matmul(c, accum, a, b, 1.0, Par::Seq);
    }
}

/// Borrowed strided matrix. Transposition is a stride swap.
#[derive(Clone, Copy, Debug)]
pub struct MatrixView<'a, T = f64> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T: Scalar> MatrixView<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatrixView {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        MatrixView {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn as_faer(&self) -> MatRef<'a, T> {
        if self.col_stride == 1 {
            MatRef::from_row_major_slice_with_stride(self.data, self.rows, self.cols, self.row_stride)
        } else if self.row_stride == 1 {
            MatRef::from_column_major_slice_with_stride(self.data, self.rows, self.cols, self.col_stride)
        } else {
            panic!("gemm: view needs a unit stride along one axis");
        }
    }
}

/// `c = a · b + beta · c` with `c` row-major `a.rows × b.cols`.
///
/// Runs single-threaded, so results are bit-reproducible.
///
/// # Panics
/// On inner-dimension mismatch, undersized buffers, or a view that is
/// neither row- nor column-contiguous. Callers validate shapes at the API
/// boundary.
pub fn gemm<T: Scalar>(a: MatrixView<'_, T>, b: MatrixView<'_, T>, beta: T, c: &mut [T]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimension");
    assert!(m > 0 && k > 0 && n > 0, "gemm on empty matrix");
    let c = &mut c[..m * n];
    let accum = if beta == T::ZERO {
        Accum::Replace
    } else {
        if beta != T::ONE {
            c.iter_mut().for_each(|v| *v *= beta);
        }
        Accum::Add
    };
    T::product(MatMut::from_row_major_slice_mut(c, m, n), accum, a.as_faer(), b.as_faer());
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, k] = a.dims2("matmul")?;
    let [k2, n] = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            dim: "inner dimension (rhs rows)",
            expected: k,
            actual: k2,
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    gemm(
        MatrixView::row_major(a.data(), m, k),
        MatrixView::row_major(b.data(), k, n),
        0.0,
        out.data_mut(),
    );
    Ok(out)
}

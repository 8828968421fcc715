use serde::{Deserialize, Serialize};

use super::{gemm, MatrixView, Scalar, Tensor};
use crate::error::{Error, Result};

/// Element type of the convolution matrix products. Lowering, bias,
/// accumulation into gradients and every other layer stay in `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    /// Patch matrices, kernels and output gradients are rounded to `f32`
    /// for the products; roughly twice the throughput.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        ConvGeometry { stride, padding }
    }
}

/// `floor((input + 2·padding − kernel) / stride) + 1`, or `None` if the
/// kernel does not fit or the stride is zero.
pub fn conv_output_extent(input: usize, kernel: usize, geometry: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geometry.padding;
    if geometry.stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / geometry.stride + 1)
}

/// Forward inputs retained for the backward pass.
#[derive(Clone, Debug)]
pub struct Conv2dCache {
    input: Tensor,
    kernel: Tensor,
    geometry: ConvGeometry,
    precision: Precision,
}

impl Conv2dCache {
    pub fn input(&self) -> &Tensor {
        &self.input
    }
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl Dims {
    fn patch_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }
}

fn check_dims(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    geometry: ConvGeometry,
) -> Result<Dims> {
    const OP: &str = "conv2d";
    let [n, c, h, w] = input.dims4(OP)?;
    let [f, kc, kh, kw] = kernel.dims4(OP)?;
    if kc != c {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "kernel input channels",
            expected: c,
            actual: kc,
        });
    }
    if let Some(bias) = bias {
        if bias.shape() != [f] {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "bias length",
                expected: f,
                actual: bias.len(),
            });
        }
    }
    if geometry.stride == 0 {
        return Err(Error::InvalidArgument {
            op: OP,
            reason: "stride must be positive".into(),
        });
    }
    let oh = conv_output_extent(h, kh, geometry).ok_or_else(|| Error::InvalidShape {
        op: OP,
        reason: format!(
            "kernel height {kh} exceeds padded input height {}",
            h + 2 * geometry.padding
        ),
    })?;
    let ow = conv_output_extent(w, kw, geometry).ok_or_else(|| Error::InvalidShape {
        op: OP,
        reason: format!(
            "kernel width {kw} exceeds padded input width {}",
            w + 2 * geometry.padding
        ),
    })?;
    Ok(Dims {
        n,
        c,
        h,
        w,
        f,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Output columns `x` whose input column `x·stride + offset − padding`
/// falls inside `[0, extent)`.
fn valid_range(out: usize, extent: usize, offset: usize, geometry: ConvGeometry) -> (usize, usize) {
    let ConvGeometry { stride, padding } = geometry;
    // smallest x with x·stride + offset ≥ padding
    let lo = padding.saturating_sub(offset).div_ceil(stride).min(out);
    // smallest x with x·stride + offset ≥ extent + padding
    let hi = (extent + padding).saturating_sub(offset).div_ceil(stride).min(out);
    (lo, hi.max(lo))
}

/// Lowers one `C×H×W` image into a `(C·kh·kw) × (oh·ow)` patch matrix.
/// Padding positions are written as zero.
pub fn im2col<T: Scalar>(
    image: &[f64],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    geometry: ConvGeometry,
    (oh, ow): (usize, usize),
    cols: &mut [T],
) {
    let ConvGeometry { stride, padding } = geometry;
    let pixels = oh * ow;
    debug_assert_eq!(cols.len(), c * kh * kw * pixels);
    for ch in 0..c {
        let plane = &image[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kh {
            let (y_lo, y_hi) = valid_range(oh, h, ki, geometry);
            for kj in 0..kw {
                let (x_lo, x_hi) = valid_range(ow, w, kj, geometry);
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * pixels..(row + 1) * pixels];
                dst[..y_lo * ow].fill(T::ZERO);
                dst[y_hi * ow..].fill(T::ZERO);
                for y in y_lo..y_hi {
                    let out_row = &mut dst[y * ow..(y + 1) * ow];
                    let iy = y * stride + ki - padding;
                    let src = &plane[iy * w..(iy + 1) * w];
                    out_row[..x_lo].fill(T::ZERO);
                    out_row[x_hi..].fill(T::ZERO);
                    if x_lo == x_hi {
                        continue;
                    }
                    let first = x_lo * stride + kj - padding;
                    if stride == 1 {
                        for (slot, &v) in out_row[x_lo..x_hi].iter_mut().zip(&src[first..]) {
                            *slot = T::from_f64(v);
                        }
                    } else {
                        for (slot, &v) in out_row[x_lo..x_hi]
                            .iter_mut()
                            .zip(src[first..].iter().step_by(stride))
                        {
                            *slot = T::from_f64(v);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto an image,
/// accumulating overlapping contributions.
pub fn col2im<T: Scalar>(
    cols: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    geometry: ConvGeometry,
    (oh, ow): (usize, usize),
    image: &mut [f64],
) {
    let ConvGeometry { stride, padding } = geometry;
    let pixels = oh * ow;
    for ch in 0..c {
        let plane = &mut image[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kh {
            let (y_lo, y_hi) = valid_range(oh, h, ki, geometry);
            for kj in 0..kw {
                let (x_lo, x_hi) = valid_range(ow, w, kj, geometry);
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * pixels..(row + 1) * pixels];
                if x_lo == x_hi {
                    continue;
                }
                for y in y_lo..y_hi {
                    let iy = y * stride + ki - padding;
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    let first = x_lo * stride + kj - padding;
                    let src_row = &src[y * ow + x_lo..y * ow + x_hi];
                    if stride == 1 {
                        for (d, &v) in dst[first..first + src_row.len()].iter_mut().zip(src_row) {
                            *d += v.to_f64();
                        }
                    } else {
                        for (d, &v) in dst[first..].iter_mut().step_by(stride).zip(src_row) {
                            *d += v.to_f64();
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    geometry: ConvGeometry,
) -> Result<Tensor> {
    conv2d_forward_with(input, kernel, bias, geometry, Precision::F64)
}

pub fn conv2d_forward_with(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    geometry: ConvGeometry,
    precision: Precision,
) -> Result<Tensor> {
    let d = check_dims(input, kernel, Some(bias), geometry)?;
    Ok(match precision {
        Precision::F64 => forward_impl::<f64>(input, kernel, bias, geometry, &d),
        Precision::Mixed => forward_impl::<f32>(input, kernel, bias, geometry, &d),
    })
}

fn forward_impl<T: Scalar>(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    geometry: ConvGeometry,
    d: &Dims,
) -> Tensor {
    let (rows, pixels) = (d.patch_rows(), d.out_pixels());
    let mut out = Tensor::zeros(&[d.n, d.f, d.oh, d.ow]);
    let k = T::cast_slice(kernel.data());
    let mut cols = vec![T::ZERO; rows * pixels];
    let mut product = vec![T::ZERO; d.f * pixels];
    let image_len = d.c * d.h * d.w;
    for (img, dst) in input
        .data()
        .chunks_exact(image_len)
        .zip(out.data_mut().chunks_exact_mut(d.f * pixels))
    {
        im2col(
            img,
            (d.c, d.h, d.w),
            (d.kh, d.kw),
            geometry,
            (d.oh, d.ow),
            &mut cols,
        );
        gemm(
            MatrixView::row_major(&k, d.f, rows),
            MatrixView::row_major(&cols, rows, pixels),
            T::ZERO,
            &mut product,
        );
        let planes = dst.chunks_exact_mut(pixels).zip(product.chunks_exact(pixels));
        for ((plane, prod), &b) in planes.zip(bias.data()) {
            for (o, &p) in plane.iter_mut().zip(prod) {
                *o = b + p.to_f64();
            }
        }
    }
    out
}

pub fn conv2d_forward_cached(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    geometry: ConvGeometry,
) -> Result<(Tensor, Conv2dCache)> {
    conv2d_forward_cached_with(input.clone(), kernel, bias, geometry, Precision::F64)
}

/// Like [`conv2d_forward_cached`], taking ownership of the input so the
/// cache can hold it without copying.
pub fn conv2d_forward_cached_with(
    input: Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    geometry: ConvGeometry,
    precision: Precision,
) -> Result<(Tensor, Conv2dCache)> {
    let out = conv2d_forward_with(&input, kernel, bias, geometry, precision)?;
    let cache = Conv2dCache {
        input,
        kernel: kernel.clone(),
        geometry,
        precision,
    };
    Ok((out, cache))
}

/// Gradients with respect to input, kernel and bias, in the precision the
/// forward pass used.
pub fn conv2d_backward(cache: &Conv2dCache, grad_out: &Tensor) -> Result<Conv2dGrads> {
    let d = check_dims(&cache.input, &cache.kernel, None, cache.geometry)?;
    let expected = [d.n, d.f, d.oh, d.ow];
    if grad_out.shape() != expected {
        return Err(Error::InvalidShape {
            op: "conv2d_backward",
            reason: format!(
                "grad_out shape {:?} does not match forward output {expected:?}",
                grad_out.shape()
            ),
        });
    }
    Ok(match cache.precision {
        Precision::F64 => backward_impl::<f64>(cache, grad_out, &d),
        Precision::Mixed => backward_impl::<f32>(cache, grad_out, &d),
    })
}

fn backward_impl<T: Scalar>(cache: &Conv2dCache, grad_out: &Tensor, d: &Dims) -> Conv2dGrads {
    let Conv2dCache {
        input,
        kernel,
        geometry,
        ..
    } = cache;
    let (rows, pixels) = (d.patch_rows(), d.out_pixels());
    let image_len = d.c * d.h * d.w;
    let out_len = d.f * pixels;

    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_bias = Tensor::zeros(&[d.f]);
    let k = T::cast_slice(kernel.data());
    let mut grad_kernel = vec![T::ZERO; kernel.len()];
    let mut cols = vec![T::ZERO; rows * pixels];
    let mut grad_cols = vec![T::ZERO; rows * pixels];

    for ((img, dy), dx) in input
        .data()
        .chunks_exact(image_len)
        .zip(grad_out.data().chunks_exact(out_len))
        .zip(grad_input.data_mut().chunks_exact_mut(image_len))
    {
        for (gb, plane) in grad_bias.data_mut().iter_mut().zip(dy.chunks_exact(pixels)) {
            *gb += plane.iter().sum::<f64>();
        }
        im2col(
            img,
            (d.c, d.h, d.w),
            (d.kh, d.kw),
            *geometry,
            (d.oh, d.ow),
            &mut cols,
        );
        let dy = T::cast_slice(dy);
        let dy = MatrixView::row_major(&dy, d.f, pixels);
        // dK += dY · colsᵀ
        gemm(
            dy,
            MatrixView::row_major(&cols, rows, pixels).t(),
            T::ONE,
            &mut grad_kernel,
        );
        // dcols = Kᵀ · dY
        gemm(
            MatrixView::row_major(&k, d.f, rows).t(),
            dy,
            T::ZERO,
            &mut grad_cols,
        );
        col2im(
            &grad_cols,
            (d.c, d.h, d.w),
            (d.kh, d.kw),
            *geometry,
            (d.oh, d.ow),
            dx,
        );
    }
    let grad_kernel = grad_kernel.iter().map(|v| v.to_f64()).collect();
    Conv2dGrads {
        input: grad_input,
        kernel: Tensor::new(kernel.shape(), grad_kernel).expect("kernel-shaped"),
        bias: grad_bias,
    }
}

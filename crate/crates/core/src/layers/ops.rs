//! Per-layer forward/backward kernels. Each forward that needs state for
//! its backward returns an explicit cache value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatrixView, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Batch statistics and normalized activations from a batchnorm forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: Mode,
    normalized: Tensor,
    inv_std: Vec<f64>,
    gamma: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNormCache {
    /// Pre-affine normalized activations `x̂`.
    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }

    /// Per-channel batch mean and biased variance (train mode only).
    pub fn batch_stats(&self) -> Option<(&[f64], &[f64])> {
        match self.mode {
            Mode::Train => Some((&self.batch_mean, &self.batch_var)),
            Mode::Infer => None,
        }
    }
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BatchNormState<'a> {
    pub gamma: &'a Tensor,
    pub beta: &'a Tensor,
    pub running_mean: &'a Tensor,
    pub running_var: &'a Tensor,
}

/// Per-channel normalization over `(N, H, W)` for a `[N, C, H, W]` input.
///
/// Train mode uses the batch mean and the biased (1/n) batch variance;
/// infer mode uses the running statistics. Running statistics are not
/// touched here; see [`update_running_stats`].
pub fn batchnorm_forward(
    input: &Tensor,
    state: BatchNormState<'_>,
    mode: Mode,
    eps: f64,
) -> Result<(Tensor, BatchNormCache)> {
    const OP: &str = "batchnorm";
    let [n, c, h, w] = input.dims4(OP)?;
    for (t, dim) in [
        (state.gamma, "gamma length"),
        (state.beta, "beta length"),
        (state.running_mean, "running mean length"),
        (state.running_var, "running variance length"),
    ] {
        if t.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim,
                expected: c,
                actual: t.len(),
            });
        }
    }
    let plane = h * w;
    let count = n * plane;
    if mode == Mode::Train && count < 2 {
        return Err(Error::InvalidArgument {
            op: OP,
            reason: "train mode needs at least two values per channel".into(),
        });
    }

    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += x[(s * c + ch) * plane..][..plane].iter().sum::<f64>();
                }
                let mu = sum / count as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += x[(s * c + ch) * plane..][..plane]
                        .iter()
                        .map(|v| (v - mu) * (v - mu))
                        .sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = sq / count as f64;
            }
        }
        Mode::Infer => {
            mean.copy_from_slice(state.running_mean.data());
            var.copy_from_slice(state.running_var.data());
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    let (g, b) = (state.gamma.data(), state.beta.data());
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * plane;
            let src = &x[base..base + plane];
            let xn = &mut normalized.data_mut()[base..base + plane];
            for (dst, &v) in xn.iter_mut().zip(src) {
                *dst = (v - mean[ch]) * inv_std[ch];
            }
            let xn = &normalized.data()[base..base + plane];
            for (dst, &v) in out.data_mut()[base..base + plane].iter_mut().zip(xn) {
                *dst = g[ch] * v + b[ch];
            }
        }
    }
    let cache = BatchNormCache {
        mode,
        normalized,
        inv_std,
        gamma: g.to_vec(),
        batch_mean: mean,
        batch_var: var,
    };
    Ok((out, cache))
}

/// `running ← momentum · running + (1 − momentum) · batch`.
pub fn update_running_stats(
    cache: &BatchNormCache,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    momentum: f64,
) {
    if let Some((mean, var)) = cache.batch_stats() {
        for (r, &m) in running_mean.data_mut().iter_mut().zip(mean) {
            *r = momentum * *r + (1.0 - momentum) * m;
        }
        for (r, &v) in running_var.data_mut().iter_mut().zip(var) {
            *r = momentum * *r + (1.0 - momentum) * v;
        }
    }
}

pub fn batchnorm_backward(cache: &BatchNormCache, grad_out: &Tensor) -> Result<BatchNormGrads> {
    let xn = &cache.normalized;
    if grad_out.shape() != xn.shape() {
        return Err(Error::InvalidShape {
            op: "batchnorm_backward",
            reason: format!("grad {:?} vs forward {:?}", grad_out.shape(), xn.shape()),
        });
    }
    let [n, c, h, w] = xn.dims4("batchnorm_backward")?;
    let plane = h * w;
    let m = (n * plane) as f64;
    let dy = grad_out.data();
    let mut grad_gamma = vec![0.0; c];
    let mut grad_beta = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * plane;
            for i in base..base + plane {
                grad_beta[ch] += dy[i];
                grad_gamma[ch] += dy[i] * xn.data()[i];
            }
        }
    }
    let mut grad_input = Tensor::zeros(xn.shape());
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * plane;
            let gi = cache.gamma[ch] * cache.inv_std[ch];
            let dst = &mut grad_input.data_mut()[base..base + plane];
            match cache.mode {
                // dx = γ/σ · (dy − mean(dy) − x̂ · mean(dy · x̂))
                Mode::Train => {
                    let mean_dy = grad_beta[ch] / m;
                    let mean_dy_xn = grad_gamma[ch] / m;
                    for (k, d) in dst.iter_mut().enumerate() {
                        let i = base + k;
                        *d = gi * (dy[i] - mean_dy - xn.data()[i] * mean_dy_xn);
                    }
                }
                Mode::Infer => {
                    for (k, d) in dst.iter_mut().enumerate() {
                        *d = gi * dy[base + k];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_input,
        gamma: Tensor::new(&[c], grad_gamma)?,
        beta: Tensor::new(&[c], grad_beta)?,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::InvalidShape {
            op: "relu_backward",
            reason: format!("grad {:?} vs forward {:?}", grad_out.shape(), input.shape()),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `y = x · Wᵀ + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    const OP: &str = "dense";
    let [n, fan_in] = input.dims2(OP)?;
    let [fan_out, w_in] = weight.dims2(OP)?;
    if w_in != fan_in {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input features",
            expected: w_in,
            actual: fan_in,
        });
    }
    if bias.shape() != [fan_out] {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "bias length",
            expected: fan_out,
            actual: bias.len(),
        });
    }
    let mut out = Tensor::zeros(&[n, fan_out]);
    for row in out.data_mut().chunks_exact_mut(fan_out) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        MatrixView::row_major(input.data(), n, fan_in),
        MatrixView::row_major(weight.data(), fan_out, fan_in).t(),
        1.0,
        out.data_mut(),
    );
    Ok(out)
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    const OP: &str = "dense_backward";
    let [n, fan_in] = input.dims2(OP)?;
    let [fan_out, _] = weight.dims2(OP)?;
    if grad_out.shape() != [n, fan_out] {
        return Err(Error::InvalidShape {
            op: OP,
            reason: format!("grad {:?} vs output [{n}, {fan_out}]", grad_out.shape()),
        });
    }
    let dy = MatrixView::row_major(grad_out.data(), n, fan_out);
    let mut grad_weight = Tensor::zeros(weight.shape());
    gemm(
        dy.t(),
        MatrixView::row_major(input.data(), n, fan_in),
        0.0,
        grad_weight.data_mut(),
    );
    let mut grad_input = Tensor::zeros(input.shape());
    gemm(
        dy,
        MatrixView::row_major(weight.data(), fan_out, fan_in),
        0.0,
        grad_input.data_mut(),
    );
    let mut grad_bias = Tensor::zeros(&[fan_out]);
    for row in grad_out.data().chunks_exact(fan_out) {
        for (g, &d) in grad_bias.data_mut().iter_mut().zip(row) {
            *g += d;
        }
    }
    Ok(DenseGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// Mean over all elements of the squared difference, and its gradient
/// `2 (pred − target) / len` with respect to `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::InvalidShape {
            op: "mse_loss",
            reason: format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        });
    }
    let len = pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / len;
    }
    Ok((sum / len, grad))
}

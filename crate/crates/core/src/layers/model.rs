use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{self, BatchNormCache, BatchNormState, Mode};
use super::{LayerSpec, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_forward_cached_with, conv2d_forward_with, Conv2dCache, ConvGeometry, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Trainable arrays plus batchnorm running statistics, keyed
/// `layer{i}.{weight,bias,gamma,beta,running_mean,running_var}` and stored
/// in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    params: Vec<NamedTensor>,
    buffers: Vec<NamedTensor>,
}

fn layer_key(layer: usize, suffix: &str) -> String {
    format!("layer{layer}.{suffix}")
}

impl ParameterSet {
    pub fn new(params: Vec<NamedTensor>, buffers: Vec<NamedTensor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in params.iter().chain(&buffers) {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::InvalidArgument {
                    op: "ParameterSet::new",
                    reason: format!("duplicate name {}", t.name),
                });
            }
        }
        Ok(ParameterSet { params, buffers })
    }

    /// Every array at its neutral value: zeros, except batchnorm gamma and
    /// running variance at one.
    pub fn neutral(config: &ModelConfig) -> Self {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for (i, layer) in config.layers.iter().enumerate() {
            for (suffix, shape) in layer.parameter_shapes() {
                let fill = if suffix == "gamma" { 1.0 } else { 0.0 };
                params.push(NamedTensor {
                    name: layer_key(i, suffix),
                    tensor: Tensor::full(&shape, fill),
                });
            }
            for (suffix, shape) in layer.buffer_shapes() {
                let fill = if suffix == "running_var" { 1.0 } else { 0.0 };
                buffers.push(NamedTensor {
                    name: layer_key(i, suffix),
                    tensor: Tensor::full(&shape, fill),
                });
            }
        }
        ParameterSet { params, buffers }
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[NamedTensor] {
        &self.buffers
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .chain(&self.buffers)
            .find(|t| t.name == name)
            .map(|t| &t.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params
            .iter_mut()
            .chain(&mut self.buffers)
            .find(|t| t.name == name)
            .map(|t| &mut t.tensor)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|t| t.tensor.len()).sum()
    }

    /// Names, order and shapes must match what `config` declares.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = ParameterSet::neutral(config);
        for (kind, have, want) in [
            ("parameter", &self.params, &expected.params),
            ("buffer", &self.buffers, &expected.buffers),
        ] {
            if have.len() != want.len() {
                return Err(Error::InvalidArgument {
                    op: "ParameterSet::validate",
                    reason: format!("{} {kind}s, model declares {}", have.len(), want.len()),
                });
            }
            for (h, w) in have.iter().zip(want) {
                if h.name != w.name || h.tensor.shape() != w.tensor.shape() {
                    return Err(Error::InvalidArgument {
                        op: "ParameterSet::validate",
                        reason: format!(
                            "{kind} {} {:?} where model declares {} {:?}",
                            h.name,
                            h.tensor.shape(),
                            w.name,
                            w.tensor.shape()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn param(&self, layer: usize, suffix: &str) -> Result<&Tensor> {
        let key = layer_key(layer, suffix);
        self.get(&key).ok_or(Error::InvalidArgument {
            op: "model",
            reason: format!("missing parameter {key}"),
        })
    }
}

/// Kaiming-uniform (fan-in) weights, zero biases, unit gamma, zero beta.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParameterSet::neutral(config);
    for p in set.params_mut() {
        if !p.name.ends_with(".weight") {
            continue;
        }
        let fan_in: usize = p.tensor.shape()[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in p.tensor.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(set)
}

#[derive(Clone, Debug)]
enum LayerCache {
    BatchNorm(BatchNormCache),
    Conv(Conv2dCache),
    Relu(Tensor),
    Flatten(Vec<usize>),
    Dense(Tensor),
}

/// Per-layer state recorded by [`model_forward`] for [`model_backward`].
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Gradients aligned with [`ParameterSet::params`], plus the gradient with
/// respect to the network input.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<NamedTensor>,
    pub input: Tensor,
}

fn check_input(config: &ModelConfig, input: &Tensor) -> Result<()> {
    let shape = input.shape();
    if shape.len() != config.input_shape.len() + 1 || shape[1..] != config.input_shape[..] {
        return Err(Error::InvalidShape {
            op: "model",
            reason: format!(
                "input {shape:?} does not match [N, {}]",
                config
                    .input_shape
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
        .at_layer(0));
    }
    Ok(())
}

fn forward_pass(
    config: &ModelConfig,
    params: &ParameterSet,
    input: &Tensor,
    mode: Mode,
    keep_cache: bool,
) -> Result<(Tensor, ForwardCache)> {
    check_input(config, input)?;
    let mut cache = ForwardCache::default();
    let mut x = input.clone();
    for (i, layer) in config.layers.iter().enumerate() {
        // Each step consumes the activation so caches can keep it without a copy.
        let step = |x: Tensor| -> Result<(Tensor, Option<LayerCache>)> {
            Ok(match *layer {
                LayerSpec::BatchNorm { eps, .. } => {
                    let state = BatchNormState {
                        gamma: params.param(i, "gamma")?,
                        beta: params.param(i, "beta")?,
                        running_mean: params.param(i, "running_mean")?,
                        running_var: params.param(i, "running_var")?,
                    };
                    let (y, c) = ops::batchnorm_forward(&x, state, mode, eps)?;
                    (y, Some(LayerCache::BatchNorm(c)))
                }
                LayerSpec::Conv2d {
                    stride, padding, ..
                } => {
                    let (w, b) = (params.param(i, "weight")?, params.param(i, "bias")?);
                    let g = ConvGeometry::new(stride, padding);
                    if keep_cache {
                        let (y, c) = conv2d_forward_cached_with(x, w, b, g, config.precision)?;
                        (y, Some(LayerCache::Conv(c)))
                    } else {
                        (conv2d_forward_with(&x, w, b, g, config.precision)?, None)
                    }
                }
                LayerSpec::Relu => (ops::relu_forward(&x), keep_cache.then_some(LayerCache::Relu(x))),
                LayerSpec::Flatten => {
                    let n = x.shape()[0];
                    let features = x.len() / n;
                    let shape = x.shape().to_vec();
                    (x.reshape(&[n, features])?, Some(LayerCache::Flatten(shape)))
                }
                LayerSpec::Dense { .. } => {
                    let (w, b) = (params.param(i, "weight")?, params.param(i, "bias")?);
                    let y = ops::dense_forward(&x, w, b)?;
                    (y, keep_cache.then_some(LayerCache::Dense(x)))
                }
            })
        };
        let (y, layer_cache) = step(x).map_err(|e| e.at_layer(i))?;
        if let Some(c) = layer_cache.filter(|_| keep_cache) {
            cache.layers.push(c);
        }
        x = y;
    }
    Ok((x, cache))
}

/// Runs the network. In [`Mode::Train`] batchnorm uses batch statistics and
/// its running statistics in `params` are updated.
pub fn model_forward(
    config: &ModelConfig,
    params: &mut ParameterSet,
    input: &Tensor,
    mode: Mode,
) -> Result<(Tensor, ForwardCache)> {
    let (out, cache) = forward_pass(config, params, input, mode, true)?;
    if mode == Mode::Train {
        for (i, (layer, lc)) in config.layers.iter().zip(&cache.layers).enumerate() {
            if let (LayerSpec::BatchNorm { momentum, .. }, LayerCache::BatchNorm(bn)) = (layer, lc)
            {
                let mut mean = params.param(i, "running_mean")?.clone();
                let mut var = params.param(i, "running_var")?.clone();
                ops::update_running_stats(bn, &mut mean, &mut var, *momentum);
                *params.get_mut(&layer_key(i, "running_mean")).expect("validated") = mean;
                *params.get_mut(&layer_key(i, "running_var")).expect("validated") = var;
            }
        }
    }
    Ok((out, cache))
}

/// Inference-mode forward without caching; never touches `params`.
pub fn predict(config: &ModelConfig, params: &ParameterSet, input: &Tensor) -> Result<Tensor> {
    Ok(forward_pass(config, params, input, Mode::Infer, false)?.0)
}

pub fn model_backward(
    config: &ModelConfig,
    params: &ParameterSet,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<Gradients> {
    if cache.layers.len() != config.layers.len() {
        return Err(Error::MissingCache {
            layer: cache.layers.len().min(config.layers.len().saturating_sub(1)),
        });
    }
    let mut grads: Vec<NamedTensor> = params
        .params()
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            tensor: Tensor::zeros(p.tensor.shape()),
        })
        .collect();
    let mut set_grad = |name: String, g: Tensor| {
        let slot = grads
            .iter_mut()
            .find(|p| p.name == name)
            .expect("parameter validated in forward");
        slot.tensor = g;
    };

    let mut dy = grad_out.clone();
    for (i, (layer, lc)) in config.layers.iter().zip(&cache.layers).enumerate().rev() {
        let mut step = || -> Result<Tensor> {
            Ok(match (layer, lc) {
                (LayerSpec::BatchNorm { .. }, LayerCache::BatchNorm(c)) => {
                    let g = ops::batchnorm_backward(c, &dy)?;
                    set_grad(layer_key(i, "gamma"), g.gamma);
                    set_grad(layer_key(i, "beta"), g.beta);
                    g.input
                }
                (LayerSpec::Conv2d { .. }, LayerCache::Conv(c)) => {
                    let g = conv2d_backward(c, &dy)?;
                    set_grad(layer_key(i, "weight"), g.kernel);
                    set_grad(layer_key(i, "bias"), g.bias);
                    g.input
                }
                (LayerSpec::Relu, LayerCache::Relu(x)) => ops::relu_backward(x, &dy)?,
                (LayerSpec::Flatten, LayerCache::Flatten(shape)) => dy.clone().reshape(shape)?,
                (LayerSpec::Dense { .. }, LayerCache::Dense(x)) => {
                    let g = ops::dense_backward(x, params.param(i, "weight")?, &dy)?;
                    set_grad(layer_key(i, "weight"), g.weight);
                    set_grad(layer_key(i, "bias"), g.bias);
                    g.input
                }
                _ => return Err(Error::MissingCache { layer: i }),
            })
        };
        dy = step().map_err(|e| e.at_layer(i))?;
    }
    Ok(Gradients {
        params: grads,
        input: dy,
    })
}

//! Landmark regressor: layer specifications, the default architecture, and
//! the composed forward/backward passes.
//!
//! The default network is a reconstruction. Only its outline is fixed
//! (a leading batchnorm, five 3×3 convolutions, a 16-value regression
//! head); the channel widths were chosen so that the trainable parameter
//! count lands at 1,557,782, about 1.2% below the 1,577,260 figure it is
//! meant to approximate. ReLU follows every convolution and downsampling is
//! done by stride-2 convolutions; there is no pooling.

mod model;
mod ops;

pub use model::{
    init_params, model_backward, model_forward, predict, ForwardCache, Gradients, NamedTensor,
    ParameterSet,
};
pub use ops::{
    batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, mse_loss,
    relu_backward, relu_forward, update_running_stats, BatchNormCache, BatchNormGrads,
    BatchNormState, DenseGrads, Mode,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_output_extent, ConvGeometry, Precision};

/// Number of regressed values: 8 landmarks × (x, y), interleaved.
pub const OUTPUT_LEN: usize = 16;
/// Side of the square model-space image.
pub const MODEL_SIDE: usize = 100;
/// Output layout tag stored alongside trained weights.
pub const OUTPUT_LAYOUT: &str = "interleaved-xy/deepfashion-v1";

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
}

/// Shape of one sample, without the batch axis.
pub type SampleShape = Vec<usize>;

impl LayerSpec {
    pub fn batchnorm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride,
            padding: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<SampleShape> {
        let op = self.name();
        let bad = |reason: String| Error::InvalidShape { op, reason };
        match *self {
            LayerSpec::BatchNorm { channels, .. } => match input {
                [c, _, _] if *c == channels => Ok(input.to_vec()),
                _ => Err(bad(format!("expected [{channels}, H, W], got {input:?}"))),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = input else {
                    return Err(bad(format!("expected [C, H, W], got {input:?}")));
                };
                if *c != in_channels {
                    return Err(Error::ShapeMismatch {
                        op,
                        dim: "input channels",
                        expected: in_channels,
                        actual: *c,
                    });
                }
                let g = ConvGeometry::new(stride, padding);
                let oh = conv_output_extent(*h, kernel, g);
                let ow = conv_output_extent(*w, kernel, g);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(bad(format!("kernel {kernel} does not fit input {input:?}"))),
                }
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => match input {
                [f] if *f == in_features => Ok(vec![out_features]),
                [f] => Err(Error::ShapeMismatch {
                    op,
                    dim: "input features",
                    expected: in_features,
                    actual: *f,
                }),
                _ => Err(bad(format!("expected a flat input, got {input:?}"))),
            },
        }
    }

    /// Trainable arrays as `(suffix, shape)`, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("gamma", vec![channels]), ("beta", vec![channels])]
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Dense {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            LayerSpec::Relu | LayerSpec::Flatten => vec![],
        }
    }

    /// Non-trainable state (batchnorm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::BatchNorm { channels, .. } => vec![
                ("running_mean", vec![channels]),
                ("running_var", vec![channels]),
            ],
            _ => vec![],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `[channels, height, width]` of one input sample.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Arithmetic used by the convolution products.
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    /// Batchnorm, five 3×3 conv+ReLU blocks with strides 1,2,1,2,1, then a
    /// dense regression head. `widths` are the five conv output channels.
    pub fn conv_regressor(widths: [usize; 5], side: usize) -> Self {
        let strides = [1, 2, 1, 2, 1];
        let mut layers = vec![LayerSpec::batchnorm(3)];
        let mut channels = 3;
        let mut spatial = side;
        for (&width, &stride) in widths.iter().zip(&strides) {
            layers.push(LayerSpec::conv(channels, width, stride));
            layers.push(LayerSpec::Relu);
            channels = width;
            spatial = (spatial + 2 - 3) / stride + 1;
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            in_features: channels * spatial * spatial,
            out_features: OUTPUT_LEN,
        });
        ModelConfig {
            input_shape: vec![3, side, side],
            layers,
            precision: Precision::F64,
        }
    }

    /// Per-layer output shapes, first entry being the input shape.
    pub fn shape_trace(&self) -> Result<Vec<SampleShape>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().expect("non-empty"))
                .map_err(|e| e.at_layer(i))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<SampleShape> {
        Ok(self.shape_trace()?.pop().expect("non-empty"))
    }

    /// Checks that the layers compose and end in a 16-value vector.
    pub fn validate(&self) -> Result<()> {
        let out = self.output_shape()?;
        if out != [OUTPUT_LEN] {
            return Err(Error::InvalidShape {
                op: "model",
                reason: format!("output shape {out:?}, expected [{OUTPUT_LEN}]"),
            });
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .count()
    }
}

/// The reconstructed 3×100×100 → 16 regressor:
///
/// ```text
/// BN(3) → Conv 3→32 s1 → Conv 32→64 s2 → Conv 64→64 s1
///       → Conv 64→128 s2 → Conv 128→128 s1 → Flatten(80,000) → Dense 16
/// ```
///
/// Convolutions multiply in `f32` ([`Precision::Mixed`]); everything else,
/// including gradient accumulation and the optimizer, stays in `f64`.
pub fn default_model() -> ModelConfig {
    ModelConfig {
        precision: Precision::Mixed,
        ..ModelConfig::conv_regressor([32, 64, 64, 128, 128], MODEL_SIDE)
    }
}

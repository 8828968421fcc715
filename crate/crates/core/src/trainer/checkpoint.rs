//! Binary checkpoint format.
//!
//! ```text
//! magic "DSWPCKPT" | u32 LE version | u32 LE header length | JSON header
//! | one little-endian f32 blob per trainable array, in header order
//! ```
//!
//! The header carries the model config, the output layout tag, the name and
//! shape of every blob, the batchnorm running statistics (as f32 values) and
//! optional training metadata. Values are stored at 32-bit precision, so
//! saving a loaded checkpoint reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::layers::{ModelConfig, NamedTensor, ParameterSet, OUTPUT_LAYOUT};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSWPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 16;

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub train_size: usize,
    pub val_size: usize,
    pub initial_val_mse: f64,
    pub final_train_mse: Option<f64>,
    pub final_val_mse: f64,
}

impl TrainSummary {
    pub fn new(config: &TrainConfig, report: &TrainReport) -> Self {
        TrainSummary {
            config: config.clone(),
            train_size: report.train_size,
            val_size: report.val_size,
            initial_val_mse: report.initial_val_mse,
            final_train_mse: report.final_train_mse(),
            final_val_mse: report.final_val_mse(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BufferEntry {
    name: String,
    shape: Vec<usize>,
    /// f32 values widened to f64 so the JSON text round-trips exactly.
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    output_layout: String,
    parameters: Vec<BlobEntry>,
    buffers: Vec<BufferEntry>,
    training: Option<TrainSummary>,
}

/// A model config with its parameters rounded to 32-bit precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParameterSet,
    pub training: Option<TrainSummary>,
}

fn to_f32(v: f64) -> f32 {
    v as f32
}

impl Checkpoint {
    /// Validates `params` against `model` and rounds every value to f32.
    pub fn new(model: ModelConfig, params: &ParameterSet, training: Option<TrainSummary>) -> Result<Self> {
        model.validate()?;
        params.validate(&model)?;
        let round = |set: &[NamedTensor]| -> Vec<NamedTensor> {
            set.iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    tensor: t.tensor.map(|v| f64::from(to_f32(v))),
                })
                .collect()
        };
        let params = ParameterSet::new(round(params.params()), round(params.buffers()))?;
        Ok(Checkpoint {
            model,
            params,
            training,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model: self.model.clone(),
            output_layout: OUTPUT_LAYOUT.to_string(),
            parameters: self
                .params
                .params()
                .iter()
                .map(|t| BlobEntry {
                    name: t.name.clone(),
                    shape: t.tensor.shape().to_vec(),
                })
                .collect(),
            buffers: self
                .params
                .buffers()
                .iter()
                .map(|t| BufferEntry {
                    name: t.name.clone(),
                    shape: t.tensor.shape().to_vec(),
                    values: t.tensor.data().iter().map(|&v| f64::from(to_f32(v))).collect(),
                })
                .collect(),
            training: self.training.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let header_len = u32::try_from(json.len()).map_err(|_| {
            Error::CheckpointHeader(format!("header of {} bytes is too large", json.len()))
        })?;
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * self.params.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.params() {
            for &v in t.tensor.data() {
                out.extend_from_slice(&to_f32(v).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a whole checkpoint; nothing is returned unless every check
    /// passes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = |what: &str, needed: usize| Error::CheckpointTruncated {
            what: what.to_string(),
            needed,
            available: bytes.len(),
        };
        if bytes.len() < CHECKPOINT_MAGIC.len() {
            return Err(truncated("magic", CHECKPOINT_MAGIC.len()));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointMagic);
        }
        if bytes.len() < PREAMBLE {
            return Err(truncated("preamble", PREAMBLE));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(8);
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_end = PREAMBLE + word(12) as usize;
        if bytes.len() < header_end {
            return Err(truncated("header", header_end));
        }
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
        if header.format_version != version {
            return Err(Error::CheckpointHeader(format!(
                "header says version {}, preamble says {version}",
                header.format_version
            )));
        }
        if header.output_layout != OUTPUT_LAYOUT {
            return Err(Error::CheckpointHeader(format!(
                "output layout {:?}, expected {OUTPUT_LAYOUT:?}",
                header.output_layout
            )));
        }
        header
            .model
            .validate()
            .map_err(|e| Error::CheckpointHeader(format!("model: {e}")))?;

        let declared = ParameterSet::neutral(&header.model);
        check_entries(
            "parameter",
            header.parameters.iter().map(|e| (&e.name, &e.shape)),
            declared.params(),
        )?;
        check_entries(
            "buffer",
            header.buffers.iter().map(|e| (&e.name, &e.shape)),
            declared.buffers(),
        )?;

        let blob_len = 4 * declared.parameter_count();
        let end = header_end + blob_len;
        if bytes.len() < end {
            return Err(truncated("parameter blobs", end));
        }
        if bytes.len() > end {
            return Err(Error::CheckpointTrailing(bytes.len() - end));
        }

        let mut cursor = header_end;
        let mut params = Vec::with_capacity(header.parameters.len());
        for entry in &header.parameters {
            let n: usize = entry.shape.iter().product();
            let values = bytes[cursor..cursor + 4 * n]
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
                .collect();
            cursor += 4 * n;
            params.push(NamedTensor {
                name: entry.name.clone(),
                tensor: Tensor::new(&entry.shape, values)?,
            });
        }
        let mut buffers = Vec::with_capacity(header.buffers.len());
        for entry in header.buffers {
            let values: Vec<f64> = entry.values.iter().map(|&v| f64::from(to_f32(v))).collect();
            let tensor = Tensor::new(&entry.shape, values).map_err(|_| Error::CheckpointShape {
                name: entry.name.clone(),
                expected: entry.shape.clone(),
                found: vec![entry.values.len()],
            })?;
            buffers.push(NamedTensor {
                name: entry.name,
                tensor,
            });
        }
        Ok(Checkpoint {
            model: header.model,
            params: ParameterSet::new(params, buffers)?,
            training: header.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn check_entries<'a>(
    kind: &str,
    found: impl ExactSizeIterator<Item = (&'a String, &'a Vec<usize>)>,
    declared: &[NamedTensor],
) -> Result<()> {
    if found.len() != declared.len() {
        return Err(Error::CheckpointHeader(format!(
            "{} {kind} entries, model declares {}",
            found.len(),
            declared.len()
        )));
    }
    for ((name, shape), want) in found.zip(declared) {
        if *name != want.name {
            return Err(Error::CheckpointHeader(format!(
                "{kind} {name} where model declares {}",
                want.name
            )));
        }
        if shape[..] != *want.tensor.shape() {
            return Err(Error::CheckpointShape {
                name: name.clone(),
                expected: want.tensor.shape().to_vec(),
                found: shape.clone(),
            });
        }
    }
    Ok(())
}

//! Seeded training loop, evaluation and checkpoints.

mod checkpoint;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{prepare_sample, Manifest, LANDMARK_COUNT};
use crate::error::{Error, Result};
use crate::layers::{
    init_params, model_backward, model_forward, mse_loss, predict, Mode, ModelConfig,
    ParameterSet, OUTPUT_LEN,
};
use crate::tensor::Tensor;

pub use checkpoint::{Checkpoint, TrainSummary, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Optimizer::Sgd { lr, momentum }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(1e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            epochs: 50,
            split_fraction: 0.85,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(Error::InvalidArgument {
                op: "TrainConfig",
                reason,
            })
        };
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} not in (0, 1)", self.split_fraction));
        }
        let lr = self.optimizer.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return bad(format!("learning rate {lr} must be positive"));
        }
        Ok(())
    }
}

/// Seeded shuffle of `0..n`; the first `floor(n · fraction)` indices train.
pub fn split_dataset(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument {
            op: "split_dataset",
            reason: format!("need at least 2 samples, got {n}"),
        });
    }
    let train_len = (n as f64 * fraction).floor();
    if !(train_len >= 1.0 && train_len < n as f64) {
        return Err(Error::InvalidArgument {
            op: "split_dataset",
            reason: format!("fraction {fraction} leaves an empty side for {n} samples"),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order.split_off(train_len as usize);
    Ok((order, val))
}

/// Model-ready inputs and targets held in memory. Inputs are kept at 32-bit
/// precision to halve the footprint; batches are widened to 64-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    sample_shape: Vec<usize>,
    inputs: Vec<f32>,
    targets: Vec<f64>,
}

impl TrainingData {
    pub fn new(sample_shape: &[usize]) -> Self {
        TrainingData {
            sample_shape: sample_shape.to_vec(),
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// From `[N, C, H, W]` inputs and `[N, 16]` targets.
    pub fn from_tensors(inputs: &Tensor, targets: &Tensor) -> Result<Self> {
        let n = inputs.shape()[0];
        if targets.shape() != [n, OUTPUT_LEN] {
            return Err(Error::InvalidShape {
                op: "TrainingData",
                reason: format!("targets {:?} for {n} inputs", targets.shape()),
            });
        }
        inputs.check_finite("inputs")?;
        targets.check_finite("targets")?;
        Ok(TrainingData {
            sample_shape: inputs.shape()[1..].to_vec(),
            inputs: inputs.data().iter().map(|&v| v as f32).collect(),
            targets: targets.data().to_vec(),
        })
    }

    /// Decodes and prepares every sample of a manifest.
    pub fn from_manifest(manifest: &Manifest, base_dir: &Path, side: usize) -> Result<Self> {
        if manifest.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        let mut data = TrainingData::new(&[3, side, side]);
        for (i, sample) in manifest.samples.iter().enumerate() {
            let prepared = prepare_sample(sample, base_dir, side)?;
            data.push(&prepared.input, &prepared.target)?;
            if (i + 1) % 500 == 0 {
                debug!("prepared {} of {} samples", i + 1, manifest.len());
            }
        }
        Ok(data)
    }

    pub fn push(&mut self, input: &Tensor, target: &Tensor) -> Result<()> {
        if input.shape() != &self.sample_shape[..] || target.shape() != [OUTPUT_LEN] {
            return Err(Error::InvalidShape {
                op: "TrainingData::push",
                reason: format!(
                    "sample {:?}/{:?}, expected {:?}/[{OUTPUT_LEN}]",
                    input.shape(),
                    target.shape(),
                    self.sample_shape
                ),
            });
        }
        input.check_finite("input")?;
        target.check_finite("target")?;
        self.inputs.extend(input.data().iter().map(|&v| v as f32));
        self.targets.extend_from_slice(target.data());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len() / OUTPUT_LEN
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    /// Stacks the given samples into `[B, ...]` inputs and `[B, 16]` targets.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let size: usize = self.sample_shape.iter().product();
        let mut x = Vec::with_capacity(indices.len() * size);
        let mut y = Vec::with_capacity(indices.len() * OUTPUT_LEN);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument {
                    op: "TrainingData::batch",
                    reason: format!("index {i} out of range for {} samples", self.len()),
                });
            }
            x.extend(self.inputs[i * size..(i + 1) * size].iter().map(|&v| f64::from(v)));
            y.extend_from_slice(&self.targets[i * OUTPUT_LEN..(i + 1) * OUTPUT_LEN]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok((
            Tensor::new(&shape, x)?,
            Tensor::new(&[indices.len(), OUTPUT_LEN], y)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean over every coordinate of the squared error (px²).
    pub mse: f64,
    /// Mean Euclidean distance per landmark (px).
    pub per_landmark: [f64; LANDMARK_COUNT],
    pub samples: usize,
}

#[derive(Default)]
struct ErrorSums {
    squared: f64,
    distance: [f64; LANDMARK_COUNT],
    samples: usize,
}

impl ErrorSums {
    fn add(&mut self, pred: &Tensor, target: &Tensor) -> Result<()> {
        if pred.shape() != target.shape() || pred.shape().get(1) != Some(&OUTPUT_LEN) {
            return Err(Error::InvalidShape {
                op: "evaluate",
                reason: format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
            });
        }
        for (p, t) in pred.data().chunks_exact(OUTPUT_LEN).zip(target.data().chunks_exact(OUTPUT_LEN)) {
            for k in 0..LANDMARK_COUNT {
                let (dx, dy) = (p[2 * k] - t[2 * k], p[2 * k + 1] - t[2 * k + 1]);
                self.squared += dx * dx + dy * dy;
                self.distance[k] += (dx * dx + dy * dy).sqrt();
            }
            self.samples += 1;
        }
        Ok(())
    }

    fn finish(self) -> Result<Evaluation> {
        if self.samples == 0 {
            return Err(Error::Empty("evaluation set"));
        }
        let n = self.samples as f64;
        Ok(Evaluation {
            mse: self.squared / (n * OUTPUT_LEN as f64),
            per_landmark: self.distance.map(|d| d / n),
            samples: self.samples,
        })
    }
}

/// Scores `[N, 16]` predictions against targets.
pub fn evaluate_predictions(pred: &Tensor, target: &Tensor) -> Result<Evaluation> {
    let mut sums = ErrorSums::default();
    sums.add(pred, target)?;
    sums.finish()
}

/// Inference-mode evaluation over `indices`, in chunks of `batch_size`.
/// Parameters and running statistics are not modified.
pub fn evaluate(
    model: &ModelConfig,
    params: &ParameterSet,
    data: &TrainingData,
    indices: &[usize],
    batch_size: usize,
) -> Result<Evaluation> {
    let mut sums = ErrorSums::default();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        sums.add(&predict(model, params, &x)?, &y)?;
    }
    sums.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation MSE of the initial parameters.
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochStats>,
    pub wall_time_secs: f64,
    pub parameter_count: usize,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainReport {
    /// `epoch,train_mse,val_mse` with one row per epoch. Wall time is left
    /// out so deterministic runs give identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_mse, e.val_mse).expect("string write");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn final_val_mse(&self) -> f64 {
        self.epochs.last().map_or(self.initial_val_mse, |e| e.val_mse)
    }

    pub fn final_train_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_mse)
    }
}

/// Per-parameter optimizer state.
struct OptimizerState {
    kind: Optimizer,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    fn new(kind: Optimizer, params: &ParameterSet) -> Self {
        let zeros = || params.params().iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        OptimizerState {
            kind,
            step: 0,
            first: zeros(),
            second: match kind {
                Optimizer::Adam { .. } => zeros(),
                Optimizer::Sgd { .. } => Vec::new(),
            },
        }
    }

    fn apply(&mut self, params: &mut ParameterSet, grads: &[Tensor]) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd { lr, momentum } => {
                for ((p, g), v) in params.params_mut().iter_mut().zip(grads).zip(&mut self.first) {
                    for ((w, &g), v) in p.tensor.data_mut().iter_mut().zip(g.data()).zip(v) {
                        *v = momentum * *v + g;
                        *w -= lr * *v;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let moments = self.first.iter_mut().zip(&mut self.second);
                for ((p, g), (m, v)) in params.params_mut().iter_mut().zip(grads).zip(moments) {
                    let slots = p.tensor.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v));
                    for ((w, &g), (m, v)) in slots {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Seed offsets so the split, initialization and batch order draw from
/// unrelated streams of one user seed.
const INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const SHUFFLE_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

/// Initializes parameters from the config seed and trains.
pub fn train(
    config: &TrainConfig,
    model: &ModelConfig,
    data: &TrainingData,
) -> Result<(ParameterSet, TrainReport)> {
    let params = init_params(model, config.seed ^ INIT_STREAM)?;
    train_from(config, model, params, data)
}

/// Trains starting from `params`. Each epoch is one pass over the training
/// split in a freshly shuffled order; validation runs in inference mode
/// before the first epoch and after every epoch.
pub fn train_from(
    config: &TrainConfig,
    model: &ModelConfig,
    mut params: ParameterSet,
    data: &TrainingData,
) -> Result<(ParameterSet, TrainReport)> {
    config.validate()?;
    model.validate()?;
    params.validate(model)?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.sample_shape() != model.input_shape {
        return Err(Error::InvalidShape {
            op: "train",
            reason: format!(
                "samples are {:?}, model expects {:?}",
                data.sample_shape(),
                model.input_shape
            ),
        });
    }
    let start = Instant::now();
    let (train_idx, val_idx) = split_dataset(data.len(), config.split_fraction, config.seed)?;
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut optimizer = OptimizerState::new(config.optimizer, &params);

    let initial_val_mse = evaluate(model, &params, data, &val_idx, config.batch_size)?.mse;
    info!(
        "train {} / val {} samples, {} parameters, epoch 0 val_mse {initial_val_mse:.4}",
        train_idx.len(),
        val_idx.len(),
        params.parameter_count()
    );

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order = train_idx.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = data.batch(chunk)?;
            let (pred, cache) = model_forward(model, &mut params, &x, Mode::Train)?;
            let (loss, dy) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    value: loss,
                });
            }
            let grads = model_backward(model, &params, &cache, &dy)?;
            let grads: Vec<Tensor> = grads.params.into_iter().map(|g| g.tensor).collect();
            optimizer.apply(&mut params, &grads);
            loss_sum += loss * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / order.len() as f64,
            val_mse: evaluate(model, &params, data, &val_idx, config.batch_size)?.mse,
        };
        info!(
            "epoch {epoch}/{}: train_mse {:.4} val_mse {:.4} ({:.1}s)",
            config.epochs,
            stats.train_mse,
            stats.val_mse,
            start.elapsed().as_secs_f64()
        );
        epochs.push(stats);
    }
    let report = TrainReport {
        initial_val_mse,
        epochs,
        wall_time_secs: start.elapsed().as_secs_f64(),
        parameter_count: params.parameter_count(),
        train_size: train_idx.len(),
        val_size: val_idx.len(),
    };
    Ok((params, report))
}

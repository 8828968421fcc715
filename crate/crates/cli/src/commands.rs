use std::fs;
use std::path::Path;

use dressswap::dataset::{
    filter_trainable, generate_synthetic, import_deepfashion, manifest_dir, ImportLayout,
    LandmarkSet, Manifest, LANDMARK_NAMES,
};
use dressswap::geometry::{resize_planar, swap_garment};
use dressswap::image_io::{decode, encode_png, to_tensor};
use dressswap::layers::{predict, MODEL_SIDE};
use dressswap::tensor::Precision;
use dressswap::trainer::{
    evaluate, train, Checkpoint, Optimizer, TrainConfig, TrainSummary, TrainingData,
};
use dressswap::{default_model, Error, ModelConfig};
use log::{info, warn};
use serde_json::json;

use crate::landmark_file::LandmarkFile;
use crate::overlay::draw_landmarks;
use crate::{
    Cli, CliError, Command, DetectArgs, EvalArgs, FilterArgs, ImportArgs, OptimizerKind,
    PrecisionArg, SwapArgs, SynthArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Import(a) => import(a),
        Command::Filter(a) => filter(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Detect(a) => detect(a),
        Command::Swap(a) => swap(a),
    }
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let manifest = generate_synthetic(a.count, seed, &a.out)?;
    let path = a.out.join("manifest.jsonl");
    println!("{}", json!({ "samples": manifest.len(), "manifest": path }));
    Ok(())
}

fn resolve_layout(spec: Option<&str>) -> Result<ImportLayout> {
    match spec {
        None => Ok(ImportLayout::default()),
        Some(s) if Path::new(s).exists() => Ok(ImportLayout::load(Path::new(s))?),
        Some("plain") => Ok(ImportLayout::default()),
        Some("benchmark") => Ok(ImportLayout::benchmark_list()),
        Some(s) => Err(CliError::Invalid(format!(
            "layout {s:?} is neither a file nor a preset (plain, benchmark)"
        ))),
    }
}

fn import(a: &ImportArgs) -> Result<()> {
    let layout = resolve_layout(a.layout.as_deref())?;
    info!("layout {}", serde_json::to_string(&layout).expect("layout serializes"));
    let report = import_deepfashion(&a.annotations, &a.images, &layout)?;
    report.manifest.save(&a.out)?;
    println!(
        "{}",
        json!({
            "parsed": report.parsed,
            "imported": report.manifest.len(),
            "rejected": report.rejected.len(),
            "trainable": filter_trainable(&report.manifest).len(),
        })
    );
    Ok(())
}

/// Rewrites relative image paths so they still resolve from `to_dir`.
fn rebase(mut manifest: Manifest, from_dir: &Path, to_dir: &Path) -> Result<Manifest> {
    let canon = |p: &Path| fs::canonicalize(p).map_err(|e| Error::io(p, e));
    let from = canon(from_dir)?;
    if from == canon(to_dir)? {
        return Ok(manifest);
    }
    for s in &mut manifest.samples {
        if Path::new(&s.image).is_relative() {
            s.image = from.join(&s.image).to_string_lossy().into_owned();
        }
    }
    Ok(manifest)
}

fn filter(a: &FilterArgs) -> Result<()> {
    let manifest = Manifest::load(&a.input)?;
    let kept = filter_trainable(&manifest);
    if kept.is_empty() {
        warn!("no sample of {} passed the filter", a.input.display());
    }
    let kept = rebase(kept, &manifest_dir(&a.input), &manifest_dir(&a.out))?;
    kept.save(&a.out)?;
    println!("{}", json!({ "input": manifest.len(), "kept": kept.len() }));
    Ok(())
}

/// Loads a manifest whose samples all carry eight visible landmarks.
fn load_trainable(path: &Path, side: usize) -> Result<TrainingData> {
    let manifest = Manifest::load(path)?;
    let bad = manifest.samples.iter().filter(|s| !s.is_trainable()).count();
    if bad > 0 {
        return Err(CliError::Invalid(format!(
            "{bad} of {} samples in {} are not full-body with 8 visible landmarks; run `filter` first",
            manifest.len(),
            path.display()
        )));
    }
    Ok(TrainingData::from_manifest(&manifest, &manifest_dir(path), side)?)
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let optimizer = match a.optimizer {
        OptimizerKind::Adam => Optimizer::adam(a.lr),
        OptimizerKind::Sgd => Optimizer::sgd(a.lr, a.momentum),
    };
    let config = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        split_fraction: a.split,
        seed,
        optimizer,
    };
    config.validate()?;
    let model = ModelConfig {
        precision: match a.precision {
            PrecisionArg::Mixed => Precision::Mixed,
            PrecisionArg::F64 => Precision::F64,
        },
        ..default_model()
    };
    info!("train config {}", serde_json::to_string(&config).expect("config serializes"));

    let data = load_trainable(&a.manifest, MODEL_SIDE)?;
    let (params, report) = train(&config, &model, &data)?;
    report.write_csv(&a.report)?;
    let summary = TrainSummary::new(&config, &report);
    Checkpoint::new(model, &params, Some(summary))?.save(&a.out)?;
    println!(
        "{}",
        json!({
            "train_size": report.train_size,
            "val_size": report.val_size,
            "parameters": report.parameter_count,
            "initial_val_mse": report.initial_val_mse,
            "final_train_mse": report.final_train_mse(),
            "final_val_mse": report.final_val_mse(),
            "wall_time_secs": report.wall_time_secs,
        })
    );
    Ok(())
}

/// `[C, H, W]` of a checkpoint's model input.
fn input_dims(model: &ModelConfig) -> (usize, usize) {
    (model.input_shape[1], model.input_shape[2])
}

fn eval(a: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.model)?;
    let (h, w) = input_dims(&ck.model);
    if h != w {
        return Err(CliError::Invalid(format!("model input {w}x{h} is not square")));
    }
    let data = load_trainable(&a.manifest, h)?;
    let indices: Vec<usize> = (0..data.len()).collect();
    let e = evaluate(&ck.model, &ck.params, &data, &indices, 20)?;
    println!(
        "{}",
        json!({
            "samples": e.samples,
            "mse": e.mse,
            "per_landmark": e.per_landmark,
            "landmark_names": LANDMARK_NAMES,
        })
    );
    Ok(())
}

fn detect(a: &DetectArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.model)?;
    let (h, w) = input_dims(&ck.model);
    let image = decode(&a.image)?;
    let input = resize_planar(&to_tensor(&image), w, h)?.reshape(&[1, 3, h, w])?;
    let out = predict(&ck.model, &ck.params, &input)?;
    let mut clamped = 0;
    let coords: Vec<f64> = out
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let side = if i % 2 == 0 { w } else { h } as f64;
            let c = v.clamp(0.0, side.next_down());
            clamped += usize::from(c != v);
            c
        })
        .collect();
    if clamped > 0 {
        warn!("clamped {clamped} predicted coordinates into the {w}x{h} frame");
    }
    let file = LandmarkFile::new(&LandmarkSet::from_interleaved(&coords)?, Some([w, h]));
    file.save(&a.out)?;
    if let Some(path) = &a.overlay {
        let mut canvas = image.clone();
        draw_landmarks(&mut canvas, &file.to_pixels(image.width(), image.height())?);
        encode_png(path, &canvas)?;
    }
    println!("{}", serde_json::to_string(&file).expect("landmarks serialize"));
    Ok(())
}

fn swap(a: &SwapArgs) -> Result<()> {
    let source = decode(&a.source_image)?;
    let dest = decode(&a.dest_image)?;
    let source_lm = LandmarkFile::load(&a.source_landmarks)?.to_pixels(source.width(), source.height())?;
    let dest_lm = LandmarkFile::load(&a.dest_landmarks)?.to_pixels(dest.width(), dest.height())?;
    let result = swap_garment(&source, &source_lm, &dest, &dest_lm)?;
    encode_png(&a.out, &result.image)?;
    println!(
        "{}",
        json!({
            "composited": result.composited,
            "source_bbox": result.source_bbox,
            "dest_bbox": result.dest_bbox,
        })
    );
    Ok(())
}

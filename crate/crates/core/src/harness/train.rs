//! Training and evaluation loops.

use std::path::Path;
use std::time::Instant;

use super::config::TrainConfig;
use super::metrics::{EpochMetrics, MetricsLog};
use crate::data::{
    prepare, read_clip, sample_frames, ClipPair, CropMode, CropSpec, DatasetManifest,
};
use crate::error::{Error, Result};
use crate::model::Trear;
use crate::rng::{streams, RngStream};
use crate::tensor::{checkpoint, AdamState, Graph, Mode, NdArray};

const CROP_RESIZE_KEY: &str = "meta.crop.resize_side";
const CROP_SIDE_KEY: &str = "meta.crop.crop_side";

/// Reads every clip of `split` in manifest order, keeping only the `frames`
/// sampled frames.
pub fn load_split(manifest: &DatasetManifest, split: &str, frames: usize) -> Result<Vec<ClipPair>> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| {
            let clip = read_clip(&manifest.resolve(e))?;
            if clip.label != e.label {
                return Err(Error::Data(format!(
                    "{}: manifest label {} but clip label {}",
                    e.path.display(),
                    e.label,
                    clip.label
                )));
            }
            sample_frames(&clip, frames)
        })
        .collect()
}

/// Writes the model, optional Adam state and the evaluation crop geometry.
pub fn save_checkpoint(
    path: &Path,
    model: &Trear,
    adam: Option<&AdamState>,
    crop: &CropSpec,
) -> Result<()> {
    let mut entries = model.to_entries(adam);
    entries.push((
        CROP_RESIZE_KEY.into(),
        NdArray::scalar(crop.resize_side as f64),
    ));
    entries.push((CROP_SIDE_KEY.into(), NdArray::scalar(crop.crop_side as f64)));
    checkpoint::write_file(path, &entries)
}

/// Model, Adam state and the center-crop spec used for evaluation. Crop
/// geometry falls back to the defaults when the checkpoint lacks it.
pub fn load_checkpoint(path: &Path) -> Result<(Trear, Option<AdamState>, CropSpec)> {
    let entries = checkpoint::read_file(path)?;
    let mut crop = CropSpec::default().with_mode(CropMode::Center);
    for (name, value) in &entries {
        match name.as_str() {
            CROP_RESIZE_KEY => crop.resize_side = value.data()[0] as usize,
            CROP_SIDE_KEY => crop.crop_side = value.data()[0] as usize,
            _ => {}
        }
    }
    crop.validate()?;
    let (model, adam) = Trear::from_entries(entries)?;
    Ok((model, adam, crop))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "accuracy {:.4} ({}/{})\nconfusion (rows true, columns predicted):\n",
            self.accuracy(),
            self.correct,
            self.total
        );
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>4}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Eval-mode, center-crop accuracy over `clips`.
pub fn evaluate_clips(model: &Trear, clips: &[ClipPair], crop: &CropSpec) -> Result<Evaluation> {
    let classes = model.config().num_classes;
    let spec = crop.with_mode(CropMode::Center);
    // center crops draw nothing
    let mut rng = RngStream::new(0, streams::CROP);
    let mut eval = Evaluation {
        correct: 0,
        total: 0,
        confusion: vec![vec![0; classes]; classes],
    };
    for clip in clips {
        if clip.label >= classes {
            return Err(Error::Config(format!(
                "clip {} has label {} but the model has {classes} classes",
                clip.id, clip.label
            )));
        }
        let input = prepare(clip, model.config().frames, &spec, &mut rng)?;
        let (pred, _) = model.predict(&input)?;
        eval.confusion[clip.label][pred] += 1;
        eval.total += 1;
        eval.correct += usize::from(pred == clip.label);
    }
    Ok(eval)
}

/// Loads `checkpoint` and evaluates it on `split` of `manifest`.
pub fn evaluate(checkpoint: &Path, manifest: &Path, split: &str) -> Result<Evaluation> {
    let (model, _, crop) = load_checkpoint(checkpoint)?;
    let manifest = DatasetManifest::read(manifest)?;
    let classes = manifest.num_classes();
    if classes != model.config().num_classes {
        return Err(Error::Config(format!(
            "checkpoint has {} classes but the manifest declares {classes}",
            model.config().num_classes
        )));
    }
    let clips = load_split(&manifest, split, model.config().frames)?;
    if clips.is_empty() {
        return Err(Error::Data(format!("split {split:?} is empty")));
    }
    evaluate_clips(&model, &clips, &crop)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Trear,
    pub adam: AdamState,
    pub log: MetricsLog,
}

/// Trains on in-memory clips (already sampled or not). No files are
/// touched.
pub fn fit(cfg: &TrainConfig, train: &[ClipPair], test: &[ClipPair]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut model = Trear::new(cfg.model.clone(), cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam(), model.params());
    let mut log = MetricsLog::default();
    let mut shuffle = RngStream::new(cfg.seed, streams::SHUFFLE);
    let mut crop_rng = RngStream::new(cfg.seed, streams::CROP);
    let mut dropout = RngStream::new(cfg.seed, streams::DROPOUT);
    let k = cfg.model.frames;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        adam.set_lr(lr);
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params().zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let clip = &train[i];
                let input = prepare(clip, k, &cfg.crop, &mut crop_rng)?;
                let graph = Graph::new();
                let out = model.forward(&graph, &input, Mode::Train, &mut dropout)?;
                let loss = out.loss(clip.label)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        clips: batch.iter().map(|&j| train[j].id.clone()).collect(),
                    });
                }
                loss_sum += value;
                correct += usize::from(out.predicted() == clip.label);
                graph.backward(loss)?.accumulate_params(&mut grads, scale)?;
            }
            adam.step(model.params_mut(), &grads)?;
        }
        let train_acc = correct as f64 / train.len() as f64;
        let last = epoch + 1 == cfg.epochs;
        let stop = cfg.early_stop_train_acc.is_some_and(|t| train_acc >= t);
        let test_acc = if !test.is_empty() && (cfg.eval_every_epoch || last || stop) {
            evaluate_clips(&model, test, &cfg.crop)?.accuracy()
        } else {
            f64::NAN
        };
        log.push(EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc,
            test_acc,
            seconds: started.elapsed().as_secs_f64(),
        })?;
        if stop {
            break;
        }
    }
    Ok(TrainOutcome { model, adam, log })
}

/// Reads the manifest named by `cfg`, trains, then writes the checkpoint
/// and the metrics log.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    if manifest.num_classes() != cfg.model.num_classes {
        return Err(Error::Config(format!(
            "config has {} classes but the manifest declares {}",
            cfg.model.num_classes,
            manifest.num_classes()
        )));
    }
    let train = load_split(&manifest, &cfg.train_split, cfg.model.frames)?;
    let test = load_split(&manifest, &cfg.test_split, cfg.model.frames)?;
    let outcome = fit(cfg, &train, &test)?;
    save_checkpoint(
        &cfg.checkpoint,
        &outcome.model,
        Some(&outcome.adam),
        &cfg.crop,
    )?;
    outcome.log.write(&cfg.metrics)?;
    Ok(outcome)
}

//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{CropMode, CropSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub crop: CropSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    /// First epoch (0-based) trained at the decayed rate; `None` disables
    /// decay.
    pub lr_decay_epoch: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    /// Directory for per-variant checkpoints written by `ablate`.
    pub ablation_dir: PathBuf,
    pub train_split: String,
    pub test_split: String,
    /// Stop once an epoch reaches this train accuracy.
    pub early_stop_train_acc: Option<f64>,
    /// Evaluate the test split after every epoch (otherwise only after the
    /// last one).
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            model: ModelConfig::default(),
            crop: CropSpec::default(),
            epochs: 50,
            batch_size: 4,
            lr: adam.lr,
            lr_decay_factor: 0.1,
            lr_decay_epoch: Some(30),
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            manifest: PathBuf::from("data/manifest.tsv"),
            checkpoint: PathBuf::from("model.ckpt"),
            metrics: PathBuf::from("metrics.csv"),
            ablation_dir: PathBuf::from("ablation"),
            train_split: "train".into(),
            test_split: "test".into(),
            early_stop_train_acc: None,
            eval_every_epoch: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), T::to_string)
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// Learning rate of 0-based `epoch`: a single step decay.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_epoch {
            Some(d) if epoch >= d => self.lr * self.lr_decay_factor,
            _ => self.lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.crop.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(d) = self.lr_decay_epoch {
            if d >= self.epochs && self.epochs > 0 {
                return Err(Error::Config(format!(
                    "lr_decay_epoch {d} must be below epochs {} (or none)",
                    self.epochs
                )));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "d_model" => m.d_model = parse(key, value)?,
            "frames" => m.frames = parse(key, value)?,
            "heads_encoder" => m.heads_encoder = parse(key, value)?,
            "heads_mutual" => m.heads_mutual = parse(key, value)?,
            "num_encoders" => m.num_encoders = parse(key, value)?,
            "ffn_hidden" => m.ffn_hidden = parse_optional(key, value)?,
            "dropout_rate" => m.dropout_rate = parse(key, value)?,
            "fusion_mode" => m.fusion_mode = value.parse()?,
            "num_classes" => m.num_classes = parse(key, value)?,
            "use_positional_encoding" => m.use_positional_encoding = parse_bool(key, value)?,
            "use_encoder" => m.use_encoder = parse_bool(key, value)?,
            "architecture" => m.architecture = value.parse()?,
            "clip_aggregation" => m.clip_aggregation = value.parse()?,
            "layer_norm_eps" => m.layer_norm_eps = parse(key, value)?,
            "crop_mode" => self.crop.mode = value.parse::<CropMode>()?,
            "resize_side" => self.crop.resize_side = parse(key, value)?,
            "crop_side" => self.crop.crop_side = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "lr_decay_epoch" => self.lr_decay_epoch = parse_optional(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "manifest" => self.manifest = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "metrics" => self.metrics = value.into(),
            "ablation_dir" => self.ablation_dir = value.into(),
            "train_split" => self.train_split = value.into(),
            "test_split" => self.test_split = value.into(),
            "early_stop_train_acc" => self.early_stop_train_acc = parse_optional(key, value)?,
            "eval_every_epoch" => self.eval_every_epoch = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        for p in [
            &mut cfg.manifest,
            &mut cfg.checkpoint,
            &mut cfg.metrics,
            &mut cfg.ablation_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Every field as `key = value` lines; [`TrainConfig::parse`] inverts it.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("d_model", m.d_model.to_string());
        put("frames", m.frames.to_string());
        put("heads_encoder", m.heads_encoder.to_string());
        put("heads_mutual", m.heads_mutual.to_string());
        put("num_encoders", m.num_encoders.to_string());
        put("ffn_hidden", optional(&m.ffn_hidden));
        put("dropout_rate", m.dropout_rate.to_string());
        put("fusion_mode", m.fusion_mode.to_string());
        put("num_classes", m.num_classes.to_string());
        put(
            "use_positional_encoding",
            m.use_positional_encoding.to_string(),
        );
        put("use_encoder", m.use_encoder.to_string());
        put("architecture", m.architecture.to_string());
        put("clip_aggregation", m.clip_aggregation.to_string());
        put("layer_norm_eps", m.layer_norm_eps.to_string());
        put("crop_mode", self.crop.mode.to_string());
        put("resize_side", self.crop.resize_side.to_string());
        put("crop_side", self.crop.crop_side.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lr", self.lr.to_string());
        put("lr_decay_factor", self.lr_decay_factor.to_string());
        put("lr_decay_epoch", optional(&self.lr_decay_epoch));
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("adam_eps", self.adam_eps.to_string());
        put("seed", self.seed.to_string());
        put("manifest", self.manifest.display().to_string());
        put("checkpoint", self.checkpoint.display().to_string());
        put("metrics", self.metrics.display().to_string());
        put("ablation_dir", self.ablation_dir.display().to_string());
        put("train_split", self.train_split.clone());
        put("test_split", self.test_split.clone());
        put("early_stop_train_acc", optional(&self.early_stop_train_acc));
        put("eval_every_epoch", self.eval_every_epoch.to_string());
        out
    }
}

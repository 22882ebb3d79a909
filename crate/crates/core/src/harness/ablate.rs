//! The ablation grid: modalities and fusion operators, crop modes, and the
//! encoder switch, all trained from the same seed and data order.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::config::TrainConfig;
use super::train::{fit, load_split, save_checkpoint};
use crate::data::{ClipPair, CropMode, DatasetManifest};
use crate::error::{Error, Result};
use crate::model::{Architecture, FusionMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationGroup {
    Fusion,
    Crop,
    Encoder,
}

impl AblationGroup {
    fn title(self) -> &'static str {
        match self {
            AblationGroup::Fusion => "modality and fusion",
            AblationGroup::Crop => "crop mode",
            AblationGroup::Encoder => "inter-frame encoder",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationVariant {
    pub group: AblationGroup,
    pub architecture: Architecture,
    pub fusion_mode: FusionMode,
    pub crop_mode: CropMode,
    pub use_encoder: bool,
}

impl AblationVariant {
    pub fn label(&self) -> String {
        let arch = match self.architecture {
            Architecture::RgbOnly => "rgb".to_owned(),
            Architecture::DepthOnly => "depth".to_owned(),
            Architecture::DirectFusion => format!("direct-{}", self.fusion_mode),
            Architecture::MutualFusion => format!("mutual-{}", self.fusion_mode),
        };
        let encoder = if self.use_encoder {
            "encoder"
        } else {
            "no-encoder"
        };
        format!("{arch}/{}/{encoder}", self.crop_mode)
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.model.architecture = self.architecture;
        cfg.model.fusion_mode = self.fusion_mode;
        cfg.model.use_encoder = self.use_encoder;
        cfg.crop.mode = self.crop_mode;
        cfg
    }
}

/// Fourteen variants: single modalities, direct and mutual fusion under
/// each operator with random per-frame crops; single modalities and
/// mutual addition with one shared crop region; and the same three with the
/// encoder removed.
pub fn default_grid() -> Vec<AblationVariant> {
    let v = |group, architecture, fusion_mode, crop_mode, use_encoder| AblationVariant {
        group,
        architecture,
        fusion_mode,
        crop_mode,
        use_encoder,
    };
    use AblationGroup::*;
    use Architecture::*;
    use CropMode::*;
    let mut grid = vec![
        v(Fusion, RgbOnly, FusionMode::Add, RandomPerFrame, true),
        v(Fusion, DepthOnly, FusionMode::Add, RandomPerFrame, true),
    ];
    for arch in [DirectFusion, MutualFusion] {
        for mode in FusionMode::ALL {
            grid.push(v(Fusion, arch, *mode, RandomPerFrame, true));
        }
    }
    for arch in [DepthOnly, RgbOnly, MutualFusion] {
        grid.push(v(Crop, arch, FusionMode::Add, SameRegion, true));
    }
    for arch in [DepthOnly, RgbOnly, MutualFusion] {
        grid.push(v(Encoder, arch, FusionMode::Add, RandomPerFrame, false));
    }
    grid
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub train_acc: f64,
    pub test_acc: f64,
    pub epochs: usize,
    pub checkpoint: Option<PathBuf>,
}

/// Trains every variant on in-memory clips. With `save`, checkpoints go to
/// `base.ablation_dir`.
pub fn ablate_clips(
    base: &TrainConfig,
    variants: &[AblationVariant],
    train: &[ClipPair],
    test: &[ClipPair],
    save: bool,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for (i, variant) in variants.iter().enumerate() {
        let cfg = variant.apply(base);
        let outcome = fit(&cfg, train, test)?;
        let last = outcome.log.last().cloned();
        let test_acc = match &last {
            Some(r) if !r.test_acc.is_nan() || test.is_empty() => r.test_acc,
            _ => super::train::evaluate_clips(&outcome.model, test, &cfg.crop)?.accuracy(),
        };
        let checkpoint = if save {
            let name = variant.label().replace('/', "_");
            let path = cfg.ablation_dir.join(format!("{i:02}_{name}.ckpt"));
            save_checkpoint(&path, &outcome.model, Some(&outcome.adam), &cfg.crop)?;
            Some(path)
        } else {
            None
        };
        rows.push(AblationRow {
            variant: variant.clone(),
            train_acc: last.as_ref().map_or(f64::NAN, |r| r.train_acc),
            test_acc,
            epochs: outcome.log.rows().len(),
            checkpoint,
        });
    }
    Ok(rows)
}

/// Loads the manifest named by `base` and runs the default grid.
pub fn ablate(base: &TrainConfig) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let manifest = DatasetManifest::read(&base.manifest)?;
    if manifest.num_classes() != base.model.num_classes {
        return Err(Error::Config(format!(
            "config has {} classes but the manifest declares {}",
            base.model.num_classes,
            manifest.num_classes()
        )));
    }
    let train = load_split(&manifest, &base.train_split, base.model.frames)?;
    let test = load_split(&manifest, &base.test_split, base.model.frames)?;
    ablate_clips(base, &default_grid(), &train, &test, true)
}

fn percent(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{:.2}", 100.0 * v)
    }
}

pub fn render_table(rows: &[AblationRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.variant.label().len())
        .max()
        .unwrap_or(7)
        .max(7);
    let mut out = String::new();
    let mut group = None;
    for r in rows {
        if group != Some(r.variant.group) {
            group = Some(r.variant.group);
            let _ = writeln!(out, "\n[{}]", r.variant.group.title());
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>6}",
                "variant", "train %", "test %", "epochs"
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>6}",
            r.variant.label(),
            percent(r.train_acc),
            percent(r.test_acc),
            r.epochs
        );
    }
    out.trim_start().to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_fourteen_distinct_rows_over_both_crop_modes() {
        let grid = default_grid();
        assert_eq!(grid.len(), 14);
        let mut labels: Vec<String> = grid.iter().map(AblationVariant::label).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 14);
        for mode in [CropMode::RandomPerFrame, CropMode::SameRegion] {
            assert!(grid.iter().any(|v| v.crop_mode == mode));
        }
    }
}

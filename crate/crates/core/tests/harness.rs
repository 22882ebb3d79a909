use std::fs;
use std::path::Path;

use trear_core::data::{
    generate_dataset, read_clip, write_clip, ClipPair, CropMode, CropSpec, DatasetManifest,
    GenConfig, Image,
};
use trear_core::harness::{
    ablate, default_grid, evaluate, evaluate_clips, export_attention, fit, grad_check,
    load_checkpoint, load_split, render_table, save_checkpoint, train, GradCheckSettings,
    MetricsLog, TrainConfig, METRICS_HEADER,
};
use trear_core::model::export::csv_to_map;
use trear_core::tensor::OpKind;
use trear_core::{Error, ModelConfig, RngStream, Trear};

fn dataset(
    dir: &Path,
    clips_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> DatasetManifest {
    let cfg = GenConfig {
        textures: 2,
        motions: 2,
        clips_per_class,
        frames: 4,
        side: 20,
        seed,
        test_per_class: Some(test_per_class),
    };
    generate_dataset(&cfg, dir).unwrap()
}

fn config(dir: &Path) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            d_model: 16,
            frames: 4,
            heads_encoder: 2,
            heads_mutual: 2,
            num_classes: 4,
            ..ModelConfig::default()
        },
        crop: CropSpec {
            mode: CropMode::RandomPerFrame,
            resize_side: 20,
            crop_side: 16,
        },
        epochs: 3,
        batch_size: 2,
        lr: 1e-3,
        lr_decay_epoch: Some(2),
        manifest: dir.join("data/manifest.tsv"),
        checkpoint: dir.join("model.ckpt"),
        metrics: dir.join("metrics.csv"),
        ablation_dir: dir.join("ablation"),
        ..TrainConfig::default()
    }
}

fn setup(clips_per_class: usize, test_per_class: usize) -> (tempfile::TempDir, TrainConfig) {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dir.path().join("data"), clips_per_class, test_per_class, 5);
    let cfg = config(dir.path());
    (dir, cfg)
}

#[test]
fn zero_epochs_saves_the_initialisation() {
    let (_dir, cfg) = setup(2, 1);
    let cfg = TrainConfig { epochs: 0, ..cfg };
    let outcome = train(&cfg).unwrap();
    assert!(outcome.log.rows().is_empty());
    let init = Trear::new(cfg.model.clone(), cfg.seed).unwrap();
    assert_eq!(outcome.model.params(), init.params());
    let (loaded, adam, crop) = load_checkpoint(&cfg.checkpoint).unwrap();
    assert_eq!(loaded.params(), init.params());
    assert_eq!(adam.unwrap().step_count(), 0);
    assert_eq!(
        (crop.mode, crop.resize_side, crop.crop_side),
        (CropMode::Center, 20, 16)
    );
    assert_eq!(
        fs::read_to_string(&cfg.metrics).unwrap(),
        format!("{METRICS_HEADER}\n")
    );
}

#[test]
fn training_is_bitwise_deterministic() {
    let (dir, cfg) = setup(3, 1);
    train(&cfg).unwrap();
    let other = TrainConfig {
        checkpoint: dir.path().join("again.ckpt"),
        metrics: dir.path().join("again.csv"),
        ..cfg.clone()
    };
    train(&other).unwrap();
    assert_eq!(
        fs::read(&cfg.checkpoint).unwrap(),
        fs::read(&other.checkpoint).unwrap()
    );

    let strip = |p: &Path| {
        let log = MetricsLog::parse_csv(&fs::read_to_string(p).unwrap()).unwrap();
        log.rows()
            .iter()
            .map(|r| {
                (
                    r.epoch,
                    r.lr.to_bits(),
                    r.train_loss,
                    r.train_acc,
                    r.test_acc,
                )
            })
            .map(|(e, lr, l, a, t)| format!("{e} {lr} {l} {a} {t}"))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&cfg.metrics), strip(&other.metrics));

    let seeded = TrainConfig {
        seed: 1,
        checkpoint: dir.path().join("seed1.ckpt"),
        ..cfg.clone()
    };
    train(&seeded).unwrap();
    assert_ne!(
        fs::read(&cfg.checkpoint).unwrap(),
        fs::read(&seeded.checkpoint).unwrap()
    );
}

#[test]
fn learning_rate_decays_once() {
    let (_dir, cfg) = setup(2, 1);
    let cfg = TrainConfig {
        epochs: 5,
        lr: 1e-4,
        lr_decay_epoch: Some(3),
        ..cfg
    };
    let log = MetricsLog::parse_csv(
        &fs::read_to_string({
            train(&cfg).unwrap();
            &cfg.metrics
        })
        .unwrap(),
    )
    .unwrap();
    let lrs: Vec<f64> = log.rows().iter().map(|r| r.lr).collect();
    assert_eq!(lrs.len(), 5);
    for (e, lr) in lrs.iter().enumerate() {
        let want = if e < 3 { 1e-4 } else { 1e-5 };
        assert!((lr - want).abs() <= 1e-12 * want, "epoch {e}: {lr}");
    }
    assert_eq!(
        log.rows().iter().map(|r| r.epoch).collect::<Vec<_>>(),
        vec![0, 1, 2, 3, 4]
    );
}

#[test]
fn evaluation_is_deterministic_and_survives_a_round_trip() {
    let (dir, cfg) = setup(3, 1);
    let outcome = train(&cfg).unwrap();
    let manifest = cfg.manifest.clone();
    let a = evaluate(&cfg.checkpoint, &manifest, "test").unwrap();
    let b = evaluate(&cfg.checkpoint, &manifest, "test").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total, 4);
    assert_eq!(a.confusion.iter().flatten().sum::<usize>(), 4);
    assert_eq!(
        a.confusion
            .iter()
            .enumerate()
            .map(|(i, r)| r[i])
            .sum::<usize>(),
        a.correct
    );

    let m = DatasetManifest::read(&manifest).unwrap();
    let test = load_split(&m, "test", 4).unwrap();
    let in_memory = evaluate_clips(&outcome.model, &test, &cfg.crop).unwrap();
    assert_eq!(in_memory, a);
    assert_eq!(outcome.log.last().unwrap().test_acc, a.accuracy());

    let copy = dir.path().join("copy.ckpt");
    save_checkpoint(&copy, &outcome.model, Some(&outcome.adam), &cfg.crop).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), fs::read(&cfg.checkpoint).unwrap());
    let (loaded, adam, _) = load_checkpoint(&copy).unwrap();
    assert_eq!(adam.unwrap(), outcome.adam);
    assert_eq!(evaluate_clips(&loaded, &test, &cfg.crop).unwrap(), a);
}

#[test]
fn untrained_models_score_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10, 10, 2);
    let cfg = config(dir.path());
    let clips = load_split(&manifest, "test", 4).unwrap();
    let n = clips.len() as f64;
    let seeds = 6;
    let mean = (0..seeds)
        .map(|seed| {
            let model = Trear::new(cfg.model.clone(), seed).unwrap();
            evaluate_clips(&model, &clips, &cfg.crop)
                .unwrap()
                .accuracy()
        })
        .sum::<f64>()
        / seeds as f64;
    // three binomial standard deviations of the seed mean
    let sigma = (0.25 * 0.75 / (n * seeds as f64)).sqrt();
    assert!((mean - 0.25).abs() <= 3.0 * sigma, "mean accuracy {mean}");
}

#[test]
fn single_clip_accuracy_is_zero_or_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 1, 3);
    let cfg = config(dir.path());
    let clips = load_split(&manifest, "test", 4).unwrap();
    for seed in 0..4 {
        let model = Trear::new(cfg.model.clone(), seed).unwrap();
        let acc = evaluate_clips(&model, &clips[..1], &cfg.crop)
            .unwrap()
            .accuracy();
        assert!(acc == 0.0 || acc == 1.0);
    }
}

#[test]
fn evaluation_rejects_mismatched_or_empty_inputs() {
    let (dir, cfg) = setup(2, 1);
    let three = TrainConfig {
        epochs: 0,
        model: ModelConfig {
            num_classes: 3,
            ..cfg.model.clone()
        },
        ..cfg.clone()
    };
    assert!(matches!(train(&three), Err(Error::Config(_))));
    let model = Trear::new(three.model.clone(), 0).unwrap();
    let ckpt = dir.path().join("three.ckpt");
    save_checkpoint(&ckpt, &model, None, &cfg.crop).unwrap();
    assert!(matches!(
        evaluate(&ckpt, &cfg.manifest, "test"),
        Err(Error::Config(_))
    ));

    train(&TrainConfig {
        epochs: 0,
        ..cfg.clone()
    })
    .unwrap();
    assert!(matches!(
        evaluate(&cfg.checkpoint, &cfg.manifest, "validation"),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        evaluate(&cfg.checkpoint, &dir.path().join("missing.tsv"), "test"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn non_finite_loss_names_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let frame = |v: f64| Image::filled(20, 20, 3, v);
    let depth = Image::filled(20, 20, 1, 100.0);
    let good = ClipPair {
        id: "good".into(),
        label: 0,
        rgb: vec![frame(0.5); 4],
        depth: vec![depth.clone(); 4],
    };
    let bad = ClipPair {
        id: "bad".into(),
        label: 1,
        rgb: vec![frame(f64::NAN); 4],
        depth: vec![depth; 4],
    };
    let cfg = TrainConfig {
        batch_size: 1,
        ..cfg
    };
    match fit(&cfg, &[good, bad], &[]) {
        Err(Error::NonFiniteLoss { epoch, clips, .. }) => {
            assert_eq!(epoch, 0);
            assert_eq!(clips, vec!["bad".to_string()]);
        }
        other => panic!(
            "expected a non-finite loss error, got {:?}",
            other.map(|o| o.log)
        ),
    }
}

fn quick_settings() -> GradCheckSettings {
    let mut s = GradCheckSettings::default();
    s.options.max_entries_per_block = Some(3);
    s
}

#[test]
fn grad_check_flags_a_corrupted_backward_rule() {
    let clean = grad_check(0, &quick_settings()).unwrap();
    assert!(clean.passed(), "{}", clean.render());
    for kind in [
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::Conv2d,
        OpKind::MatMul,
    ] {
        let settings = GradCheckSettings {
            fault: Some((kind, 1.5)),
            ..quick_settings()
        };
        let report = grad_check(0, &settings).unwrap();
        assert!(!report.passed(), "{kind:?} fault went unnoticed");
        assert!(report.render().contains("FLAGGED"));
    }
}

#[test]
fn grad_check_reports_are_reproducible() {
    let a = grad_check(4, &quick_settings()).unwrap();
    let b = grad_check(4, &quick_settings()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.render(), b.render());
    let model = Trear::new(quick_settings().model, 0).unwrap();
    assert_eq!(a.blocks.len(), model.params().len());
}

fn repeated_frame_clip(dir: &Path, frames: usize) {
    let mut rng = RngStream::new(1, "frame");
    let rgb = Image::new(20, 20, 3, (0..1200).map(|_| rng.next_f64()).collect()).unwrap();
    let depth = Image::new(
        20,
        20,
        1,
        (0..400)
            .map(|_| rng.uniform(500.0, 4000.0).round())
            .collect(),
    )
    .unwrap();
    write_clip(
        &ClipPair {
            id: "same".into(),
            label: 0,
            rgb: vec![rgb; frames],
            depth: vec![depth; frames],
        },
        dir,
    )
    .unwrap();
}

#[test]
fn exported_maps_have_the_clip_shape() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"), 1, 0, 4);
    let model_cfg = ModelConfig {
        frames: 8,
        ..config(dir.path()).model
    };
    let crop = config(dir.path()).crop;
    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&ckpt, &Trear::new(model_cfg, 2).unwrap(), None, &crop).unwrap();

    let clip_dir = manifest.resolve(&manifest.entries[0]);
    assert_eq!(read_clip(&clip_dir).unwrap().len(), 4);
    let out = dir.path().join("maps");
    let files = export_attention(&ckpt, &clip_dir, &out).unwrap();
    // 2 heads per encoder stream; mutual: head mean plus 2 heads per direction
    assert_eq!(files.len(), 2 + 2 + 3 + 3);
    for name in [
        "rgb_0_0",
        "rgb_0_1",
        "depth_0_1",
        "mutual_rgb2depth",
        "mutual_depth2rgb_1",
    ] {
        assert!(out.join(format!("{name}.csv")).exists(), "{name}");
    }
    for f in &files {
        let text = fs::read_to_string(f).unwrap();
        assert!(text.starts_with("0,1,2,3,4,5,6,7\n"));
        let map = csv_to_map(&text).unwrap();
        assert_eq!(map.shape(), &[8, 8]);
        for row in map.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn repeated_frames_without_positions_give_identical_mutual_rows() {
    let dir = tempfile::tempdir().unwrap();
    let clip_dir = dir.path().join("clip_same");
    repeated_frame_clip(&clip_dir, 8);
    let base = config(dir.path());
    let crop = base.crop;
    let ckpt = dir.path().join("m.ckpt");
    let no_pe = ModelConfig {
        frames: 8,
        use_positional_encoding: false,
        ..base.model.clone()
    };
    save_checkpoint(&ckpt, &Trear::new(no_pe, 3).unwrap(), None, &crop).unwrap();
    let out = dir.path().join("maps");
    let files = export_attention(&ckpt, &clip_dir, &out).unwrap();
    let mutual: Vec<_> = files
        .iter()
        .filter(|f| {
            f.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("mutual_")
        })
        .collect();
    assert_eq!(mutual.len(), 6);
    for f in mutual {
        let map = csv_to_map(&fs::read_to_string(f).unwrap()).unwrap();
        for row in map.rows() {
            assert_eq!(row, map.row(0));
        }
    }

    // with positions the frames are told apart
    let with_pe = ModelConfig {
        frames: 8,
        ..base.model
    };
    save_checkpoint(&ckpt, &Trear::new(with_pe, 3).unwrap(), None, &crop).unwrap();
    let files = export_attention(&ckpt, &clip_dir, &out).unwrap();
    let map = csv_to_map(&fs::read_to_string(&files[files.len() - 1]).unwrap()).unwrap();
    assert!(map.rows().any(|r| r != map.row(0)));
}

#[test]
fn ablation_covers_the_grid_with_shared_seeds() {
    let (_dir, cfg) = setup(2, 1);
    let cfg = TrainConfig {
        epochs: 1,
        lr_decay_epoch: None,
        ..cfg
    };
    let rows = ablate(&cfg).unwrap();
    assert_eq!(rows.len(), 14);
    let grid = default_grid();
    assert!(rows.iter().zip(&grid).all(|(r, v)| &r.variant == v));
    for mode in [CropMode::RandomPerFrame, CropMode::SameRegion] {
        assert!(rows
            .iter()
            .any(|r| r.variant.crop_mode == mode && !r.test_acc.is_nan()));
    }

    for r in &rows {
        let (model, _, _) = load_checkpoint(r.checkpoint.as_ref().unwrap()).unwrap();
        let names: Vec<&str> = model.params().names().collect();
        let arch = r.variant.architecture;
        assert_eq!(names.iter().any(|n| n.starts_with("rgb.")), arch.uses_rgb());
        assert_eq!(
            names.iter().any(|n| n.starts_with("depth.")),
            arch.uses_depth()
        );
        assert_eq!(
            names.iter().any(|n| n.contains(".encoder")),
            r.variant.use_encoder
        );
    }

    let table = render_table(&rows);
    for r in &rows {
        assert!(table.contains(&r.variant.label()));
    }
    assert_eq!(
        ablate(&cfg)
            .unwrap()
            .iter()
            .map(|r| r.test_acc)
            .collect::<Vec<_>>(),
        rows.iter().map(|r| r.test_acc).collect::<Vec<_>>()
    );
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use trear_core::data::{generate_dataset, GenConfig};
use trear_core::harness::{self, GradCheckSettings, TrainConfig};

#[derive(Parser)]
#[command(
    name = "trear",
    version,
    about = "Two-stream RGB-D action recognition with mutual attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGB-D dataset whose classes need both streams.
    GenData {
        /// Texture identities and depth-motion patterns; classes = T * M.
        #[arg(long, num_args = 2, value_names = ["T", "M"], default_values_t = [2, 2])]
        classes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        clips_per_class: usize,
        /// Clips per class held out for testing [default: a third].
        #[arg(long)]
        test_per_class: Option<usize>,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy and confusion matrix of a checkpoint on one split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Compare backward() with central finite differences on a small model.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probe at most this many entries per parameter block.
        #[arg(long)]
        max_entries: Option<usize>,
    },
    /// Write every attention map of one clip as CSV.
    ExportAttn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ablation grid and print the accuracy table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData {
            classes,
            clips_per_class,
            test_per_class,
            frames,
            side,
            seed,
            out,
        } => {
            let cfg = GenConfig {
                textures: classes[0],
                motions: classes[1],
                clips_per_class,
                frames,
                side,
                seed,
                test_per_class,
            };
            let manifest = generate_dataset(&cfg, &out)?;
            println!(
                "wrote {} clips over {} classes to {}",
                manifest.entries.len(),
                manifest.num_classes(),
                out.display()
            );
        }
        Command::Train { config } => {
            let cfg = TrainConfig::read(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let outcome = harness::train(&cfg)?;
            for r in outcome.log.rows() {
                println!(
                    "epoch {:>3}  lr {:.1e}  loss {:.4}  train {:.4}  test {:.4}  {:.1}s",
                    r.epoch, r.lr, r.train_loss, r.train_acc, r.test_acc, r.seconds
                );
            }
            println!("checkpoint {}", cfg.checkpoint.display());
            println!("metrics {}", cfg.metrics.display());
        }
        Command::Eval {
            ckpt,
            manifest,
            split,
        } => {
            print!("{}", harness::evaluate(&ckpt, &manifest, &split)?.render());
        }
        Command::GradCheck { seed, max_entries } => {
            let mut settings = GradCheckSettings::default();
            settings.options.max_entries_per_block = max_entries;
            let report = harness::grad_check(seed, &settings)?;
            print!("{}", report.render());
            return Ok(report.passed());
        }
        Command::ExportAttn { ckpt, clip, out } => {
            let files = harness::export_attention(&ckpt, &clip, &out)?;
            for f in &files {
                println!("{}", f.display());
            }
        }
        Command::Ablate { config } => {
            let cfg = TrainConfig::read(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let rows = harness::ablate(&cfg)?;
            let table = harness::render_table(&rows);
            let path = cfg.ablation_dir.join("table.txt");
            std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Training, evaluation and verification commands.

pub mod ablate;
mod config;
pub mod export;
pub mod gradcheck;
mod metrics;
pub mod train;

pub use ablate::{ablate, default_grid, render_table, AblationRow, AblationVariant};
pub use config::TrainConfig;
pub use export::export_attention;
pub use gradcheck::{grad_check, GradCheckReport, GradCheckSettings};
pub use metrics::{EpochMetrics, MetricsLog, METRICS_HEADER};
pub use train::{
    evaluate, evaluate_clips, fit, load_checkpoint, load_split, save_checkpoint, train, Evaluation,
    TrainOutcome,
};

//! Training loop, checkpoints, prediction, ensembling and metrics.

mod checkpoint;
mod cv;
mod fit;
mod metrics;
mod predict;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use cv::{cross_validate, CvReport, FoldResult};
pub use fit::{history_csv, train, HistoryRow, TrainOutcome};
pub use metrics::{exact_mean, metric_report, metrics, quantile, summarize, MetricReport, Metrics, Summary};
pub use predict::{ensemble_predict, normalized_predictions, predict};

use crate::data::DataError;
use crate::models::ModelError;
use crate::nn::{LrSchedule, NnError};

pub const DEFAULT_CHECKPOINT_KEEP: usize = 20;
pub const DEFAULT_MAX_STEPS: u64 = 500_000;
pub const DEFAULT_EVAL_INTERVAL: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("no training batch has the two rows batch norm needs")]
    NoTrainingBatches,
    #[error("the fold has no validation pairs")]
    EmptyValidation,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("checkpoint vocabulary differs from the dataset's")]
    VocabMismatch,
    #[error("checkpoint gene panel differs from the dataset's")]
    PanelMismatch,
    #[error("{pred} predictions for {truth} truth values")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("metrics need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_steps: u64,
    pub batch_size: usize,
    pub eval_interval: u64,
    pub checkpoint_keep: usize,
    pub seed: u64,
    /// Train on every stored SMILES variant instead of the canonical one.
    pub augment: bool,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: DEFAULT_MAX_STEPS,
            batch_size: crate::data::DEFAULT_BATCH_SIZE,
            eval_interval: DEFAULT_EVAL_INTERVAL,
            checkpoint_keep: DEFAULT_CHECKPOINT_KEEP,
            seed: 0,
            augment: true,
            schedule: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    /// Small-scale settings for tests and quick runs.
    pub fn desk() -> Self {
        TrainConfig { max_steps: 5_000, batch_size: 128, eval_interval: 100, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.eval_interval == 0 || self.checkpoint_keep == 0 {
            return bad("eval_interval and checkpoint_keep must be positive");
        }
        if self.max_steps > 0 && self.eval_interval > self.max_steps {
            return bad("eval_interval exceeds max_steps");
        }
        if !(self.schedule.initial > 0.0) || !(self.schedule.decay_factor > 0.0) {
            return bad("learning rate and decay factor must be positive");
        }
        Ok(())
    }
}

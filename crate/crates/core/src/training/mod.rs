//! Losses, the imbalance schedule, SGD, the training phases and checkpoints.

mod checkpoint;
mod fit;
mod loss;
mod model;
mod schedule;
mod sgd;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fit::{
    evaluation_loss, finetune, finetune_with_hook, train_autoencoder, train_autoencoder_with_hook,
    train_completion, train_completion_with_hook, train_low_res, EpochHook, EpochRecord, History,
};
pub use loss::{weighted_bce, weighted_squared_error, LossKind, BCE_EPS};
pub use model::{
    depth_batch, CompletionModel, ModelVariant, HIDDEN_DIM, LOW_RESOLUTION, LOW_RES_OUTPUT_GROUP,
};
pub use schedule::{
    occupancy_ratio, ratio_from_counts, ImbalanceSchedule, DEFAULT_RAMP_EPOCHS, DEFAULT_S_MIN,
};
pub use sgd::{sgd_step, Sgd};

use thiserror::Error;

use crate::codec::CodecError;
use crate::dataset::DatasetError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("optimizer state: {0}")]
    State(String),
    #[error("loss diverged (non-finite) at epoch {epoch}")]
    Divergence { epoch: u32 },
    #[error("expected resolution {expected}, found {found}")]
    Resolution { expected: usize, found: usize },
    #[error("checkpoint variant mismatch: expected {expected}, found {found}")]
    Variant {
        expected: &'static str,
        found: ModelVariant,
    },
    #[error("checkpoint format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported checkpoint version {found} at byte {offset}")]
    Version { offset: u64, found: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub const DEFAULT_FREEZE_EPOCHS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub seed: u64,
    /// Epochs (absolute) during which the stacked decoder stays frozen.
    pub freeze_epochs: u32,
    pub ramp_epochs: u32,
    pub s_min: f64,
    pub loss: LossKind,
    pub variant: ModelVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 16,
            epochs: 500,
            seed: 0,
            freeze_epochs: DEFAULT_FREEZE_EPOCHS,
            ramp_epochs: DEFAULT_RAMP_EPOCHS,
            s_min: DEFAULT_S_MIN,
            loss: LossKind::WeightedBce,
            variant: ModelVariant::HighResStacked,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.s_min > 0.0 && self.s_min <= 1.0) {
            return bad(format!("s_min must lie in (0, 1], got {}", self.s_min));
        }
        Ok(())
    }

    /// Additionally requires `freeze_epochs <= epochs`, as a fresh stacked run must
    /// unfreeze the decoder before it ends.
    pub fn validate_fresh(&self) -> Result<(), TrainError> {
        self.validate()?;
        if self.freeze_epochs > self.epochs {
            return Err(TrainError::Config(format!(
                "freeze_epochs {} exceeds epochs {}",
                self.freeze_epochs, self.epochs
            )));
        }
        Ok(())
    }
}

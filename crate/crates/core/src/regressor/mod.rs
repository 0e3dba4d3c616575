//! VA regression: an encoder produces token states, attention pooling
//! collapses them into one vector, and two linear heads read off valence and
//! arousal on the normalized scale.

mod checkpoint;
mod encoder;
mod gradcheck;
mod head;
mod loss;
mod optim;
mod params;
mod schedule;
mod train;

use thiserror::Error;

use crate::metrics::MetricError;

pub use crate::dataio::RegressionExample;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use encoder::{
    fnv1a, Encoder, EncoderOutput, FrozenEncoder, HashTokenizer, ToyEncoder, ToyEncoderConfig,
    ToyTape,
};
pub use gradcheck::{check_head_gradients, relative_error, GradCheck};
pub use head::{
    attention_pool, attention_pool_backward, build_input, predict_va, HeadParams, InputTemplate,
    Pooled, PoolingParams, RegressionHeads, DEFAULT_TEMPLATE,
};
pub use loss::{
    ccc_loss, combine, mse_loss, sample_triplets, total_loss, total_loss_grad, triplet_loss,
    LossBreakdown, LossConfig, Triplet,
};
pub use optim::AdamW;
pub use params::{ParamSet, Tensor};
pub use schedule::{lr_multiplier, EpochMark, LrSchedule, ScheduleConfig};
pub use train::{
    history_csv, mean_predictor_rmse, train, Encoded, EpochRecord, Gradients, Regressor,
    TrainConfig, TrainReport,
};

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("every token is masked")]
    AllMasked,
    #[error("input template: {0}")]
    Template(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch too small: need {needed}, got {got}")]
    BatchTooSmall { needed: usize, got: usize },
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}, step {step} (loss {loss})")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

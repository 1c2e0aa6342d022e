//! Batching, the optimizer and the training loop.

mod batch;
mod optimizer;
mod trainer;

pub use batch::{make_batches, Batch, Padded};
pub use optimizer::{RmsProp, RmsPropConfig};
pub use trainer::{
    dev_bleu, train, DevSet, MetricRow, TrainConfig, TrainOutcome, Trainer, METRICS_HEADER,
};

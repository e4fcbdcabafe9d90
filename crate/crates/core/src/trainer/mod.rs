//! Alternating generator/discriminator training, augmentation and inference.

mod augment;
mod config;
mod infer;
mod iteration;
mod optimizer;
mod run;

pub use augment::{Augmentation, Augmenter, Prepared};
pub use config::TrainConfig;
pub use infer::{evaluate, infer, infer_batch, predict_samples, Detection, InferSettings};
pub use iteration::{Batch, IterationOutcome, Step, Trainer, ALGORITHM_STEPS};
pub use optimizer::{rmsprop_update, RmsProp};
pub use run::{
    checkpoint_path, discriminator_checkpoint_path, epoch_batches, train_loop, EpochSummary, TrainLogRecord, TrainSummary,
    LOG_FILE, LOG_HEADER,
};

#[cfg(test)]
mod tests;

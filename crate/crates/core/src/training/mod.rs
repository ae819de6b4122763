//! Optimization: Adam, the step-decay schedule, batch-norm freezing and the
//! resumable training loop.

mod log;
mod optimizer;
mod plan;
mod trainer;

pub use log::{EpochRecord, FreezeEvent, StepRecord, TrainLog};
pub use optimizer::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use plan::{
    lr_at, TrainPlan, DEFAULT_BN_FREEZE_EPOCH, DEFAULT_INITIAL_LR, DEFAULT_MILESTONES, DEFAULT_MINIBATCH, HALVINGS,
};
pub use trainer::{
    assemble_batch, crop_clip, epoch_batches, epoch_checkpoint_path, train, ClipSource, ManifestSource, Trainer,
};

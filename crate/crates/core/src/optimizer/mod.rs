//! Group-relative advantages, the clipped surrogate with KL penalty, and the
//! training step that ties sampling, dithering and the update together.
//!
//! Gradients here are ascent directions: the step adds `lr * g`.

mod advantage;
mod surrogate;
mod train;

pub use advantage::{batch_advantages, group_advantages, AdvantageMethod, ADVANTAGE_DELTA};
pub use surrogate::{
    clip_gradient, dynamic_sampling_filter, surrogate_gradient, surrogate_objective, ClipConfig,
    GroupBatch, KlMode, RatioLevel, UpdateReport,
};
pub use train::{train_step, SampleRecord, StepOutcome, Task, TrainConfig, TrainLogRow, TrainState};

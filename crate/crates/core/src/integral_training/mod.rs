//! Training of repeated integral fields: networks whose `n`-th finite
//! differences along the kernel axes reproduce a signal convolved with the
//! minimal kernel.

mod checkpoint;
mod train;

pub use checkpoint::{MlpCheckpoint, TrainingMeta};
pub use train::{
    antiderivative_quality, loss_at, stencil, train_integral_field,
    train_integral_field_with_progress, QualityConfig, TrainConfig,
};

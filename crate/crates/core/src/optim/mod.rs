//! Optimisation: Adam, the reduce-on-plateau learning-rate policy, and the
//! deterministic epoch loop.

mod adam;
mod schedule;
mod train;

pub use adam::{adam_step, AdamState};
pub use schedule::{PlateauSchedule, IMPROVEMENT_EPS};
pub use train::{
    argmax, evaluate_subset, stack_images, train, EpochRecord, EpochSnapshot, PlateauMetric,
    TrainConfig, TrainOutcome, TrainState,
};

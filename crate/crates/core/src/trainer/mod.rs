//! The momentum-anchored training loop and its baselines.

pub mod config;
pub mod objective;
pub mod optim;
pub mod run;
pub mod step;

pub use config::{Mode, Schedule, TrainConfig};
pub use objective::{clipped_surrogate, objective_and_gradient, ObjectiveOutput};
pub use optim::{lr_at, AdamWParams, OptimizerState};
pub use run::{run_training, Batcher, RunObserver, RunOutput};
pub use step::{build_group, train_step, ScoredGroup, TrainState};

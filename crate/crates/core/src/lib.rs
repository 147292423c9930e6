//! Momentum-anchored group-relative policy optimization with IQR entropy
//! filtering, on tabular autoregressive policies over synthetic tasks.
//!
//! The current policy is trained on majority-vote pseudo-labels drawn from a
//! pool that mixes its own rollouts with rollouts of a slowly moving
//! exponential-moving-average copy. Low-entropy outlier rollouts are pruned
//! from the pool before voting.

pub mod checkpoint;
pub mod entropy_filter;
pub mod env;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod selfreward;
pub mod trainer;

pub use error::{Error, Result};
pub use policy::{Origin, Shape, TabularPolicy, Trajectory};

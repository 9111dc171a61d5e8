//! Minimal feed-forward network engine: forward, exact backprop, Adam, cosine schedule.

mod adam;
pub mod checkpoint;
mod loss;
mod mlp;
mod scalar;
mod schedule;

pub use adam::AdamState;
pub use loss::gaussian_nll_as_mse;
pub use mlp::{ForwardCache, Gradients, Mlp};
pub use scalar::Scalar;
pub use schedule::{cosine_lr, ScheduleKind, TrainSchedule};

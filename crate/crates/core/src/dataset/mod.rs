//! Trajectory persistence, normalization, skip-step relabeling and batch sampling.

mod batch;
mod io;
mod norm;
mod relabel;

pub use batch::{kappa_width, sample_batch, KappaBatch, KappaTable, ACTION_DIM, GOAL_DIM, STATE_DIM};
pub use io::{dataset_file_size, read_dataset, write_dataset, Dataset, DatasetHeader, DATASET_MAGIC};
pub use norm::{NormStats, STD_FLOOR};
pub use relabel::{
    gcsl_relabel, gcsl_relabel_dataset, horizons, relabel_dataset, relabel_trajectory,
    subgoal_indices, GcslSample, GoalMode, KappaSample, RelabelSpec,
};

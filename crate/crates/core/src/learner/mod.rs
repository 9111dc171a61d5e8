//! Training of the dynamics stack, the policy and the GCSL baseline; bundles.

mod bundle;
mod train;

pub use bundle::{
    bundle_file_size, load_bundle, save_bundle, Bundle, BundleHeader, Method, BUNDLE_MAGIC,
};
pub use train::{
    gcsl_table, rsp_table, table_mse, train_dynamics_stack, train_gcsl, train_policy, train_rsp,
    untrained_rsp,
    DynamicsStack, GoalPolicy, LossTrace, TrainConfig,
};

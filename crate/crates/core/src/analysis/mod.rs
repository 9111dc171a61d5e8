//! Rollout-RMSE curves, success-rate evaluation, ablation grids and latency.

mod ablation;
mod eval;
mod latency;
mod rmse;

pub use ablation::{ablation_grid, train_seeded, write_ablation_csv, AblationCell, AblationConfig};
pub use eval::{draw_task, evaluate, evaluate_per_seed, EpisodeRecord, EvalConfig, EvalReport, GoalSpec};
pub use latency::{latency_bench, write_latency_csv, LatencyStats};
pub use rmse::{rollout_rmse, write_rmse_csv, RmseCurve, SkipStepPredictor};

//! Train-and-evaluate grids over relabel specs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_per_seed, EvalReport, GoalSpec};
use super::rmse::{rollout_rmse, RmseCurve};
use crate::dataset::{Dataset, RelabelSpec};
use crate::env::{Maze, Trajectory};
use crate::error::{Error, Result};
use crate::learner::{rsp_table, train_rsp, Bundle, TrainConfig};
use crate::planner::PlannerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub specs: Vec<RelabelSpec>,
    /// Each seed trains its own bundle and evaluates it under the same seed.
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub episodes: usize,
    pub goals: GoalSpec,
    pub planner: PlannerConfig,
    /// Rollout-RMSE horizon; no curves when absent.
    pub h_max: Option<usize>,
    pub rmse_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    pub spec: RelabelSpec,
    pub report: Option<EvalReport>,
    /// Seed-averaged curve.
    pub curve: Option<RmseCurve>,
    pub error: Option<String>,
}

/// Trains one bundle per seed with `cfg.seed = seed` and relabel stream `seed`.
pub fn train_seeded(ds: &Dataset, spec: &RelabelSpec, train: &TrainConfig, seed: u64) -> Result<Bundle> {
    let table = rsp_table(ds, spec, seed)?;
    let cfg = TrainConfig {
        seed,
        ..train.clone()
    };
    let (stack, policy, _) = train_rsp(&table, &ds.norm, spec, &cfg)?;
    let mut b = Bundle::rsp(stack, policy);
    b.train = Some(cfg);
    b.env = ds.env.clone();
    Ok(b)
}

fn run_cell(
    ds: &Dataset,
    eval_trajs: &[Trajectory],
    maze: &Maze,
    spec: &RelabelSpec,
    cfg: &AblationConfig,
) -> Result<(EvalReport, Option<RmseCurve>)> {
    let bundles: Vec<Bundle> = cfg
        .seeds
        .iter()
        .map(|&s| train_seeded(ds, spec, &cfg.train, s))
        .collect::<Result<_>>()?;
    let agents: Vec<(u64, &Bundle)> = cfg.seeds.iter().copied().zip(&bundles).collect();
    let report = evaluate_per_seed(&agents, maze, cfg.episodes, cfg.goals, &cfg.planner)?;
    let curve = match cfg.h_max {
        Some(h) => {
            let curves: Vec<RmseCurve> = bundles
                .iter()
                .map(|b| rollout_rmse(b.stack.as_ref().expect("rsp bundle"), eval_trajs, h, cfg.rmse_stride))
                .collect::<Result<_>>()?;
            Some(RmseCurve::average(&curves)?)
        }
        None => None,
    };
    Ok((report, curve))
}

/// Runs every cell; a failing cell records its error and the grid continues.
pub fn ablation_grid(
    ds: &Dataset,
    eval_trajs: &[Trajectory],
    maze: &Maze,
    cfg: &AblationConfig,
) -> Result<Vec<AblationCell>> {
    if cfg.specs.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::config("an ablation needs at least one config and one seed"));
    }
    for s in &cfg.specs {
        s.validate()?;
    }
    Ok(cfg
        .specs
        .par_iter()
        .map(|spec| {
            let (report, curve, error) = match run_cell(ds, eval_trajs, maze, spec, cfg) {
                Ok((r, c)) => (Some(r), c, None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            AblationCell {
                label: spec.label(),
                spec: *spec,
                report,
                curve,
                error,
            }
        })
        .collect())
}

/// `config,success,stderr,mean_len,latency_us`; failed cells report NaN.
pub fn write_ablation_csv<W: Write>(w: W, cells: &[AblationCell]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["config", "success", "stderr", "mean_len", "latency_us"])?;
    for c in cells {
        let row = c.report.as_ref().map_or([f64::NAN; 4], |r| {
            [r.success_rate, r.stderr, r.mean_len, r.latency_mean_us]
        });
        out.serialize((&c.label, row[0], row[1], row[2], row[3]))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::evaluate;
    use crate::analysis::EvalConfig;
    use crate::env::{scripted_collect, CollectStyle};

    #[test]
    fn single_cell_grid_matches_direct_evaluation() {
        let m = Maze::preset("umaze").unwrap();
        let ds = Dataset::new(scripted_collect(&m, CollectStyle::Diverse, 20, 200, 0).unwrap(), None).unwrap();
        let eval_trajs = scripted_collect(&m, CollectStyle::Play, 2, 60, 1).unwrap();
        let train = TrainConfig {
            hidden: vec![16, 16],
            batch_size: 32,
            total_steps: 30,
            ..TrainConfig::desk()
        };
        let spec = RelabelSpec::new(4, 2).unwrap();
        let cfg = AblationConfig {
            specs: vec![spec],
            seeds: vec![3],
            train: train.clone(),
            episodes: 5,
            goals: GoalSpec::Designated,
            planner: PlannerConfig::new(40),
            h_max: Some(16),
            rmse_stride: 4,
        };
        let cells = ablation_grid(&ds, &eval_trajs, &m, &cfg).unwrap();
        assert_eq!(cells.len(), 1);
        let grid = cells[0].report.as_ref().unwrap();

        let b = train_seeded(&ds, &spec, &train, 3).unwrap();
        let direct = evaluate(
            &b,
            &m,
            &EvalConfig {
                episodes: 5,
                seeds: vec![3],
                goals: GoalSpec::Designated,
                planner: PlannerConfig::new(40),
            },
        )
        .unwrap();
        assert_eq!(grid.records, direct.records);
        assert_eq!(grid.success_rate, direct.success_rate);
        let curve = rollout_rmse(b.stack.as_ref().unwrap(), &eval_trajs, 16, 4).unwrap();
        assert_eq!(cells[0].curve.as_ref().unwrap().rmse, curve.rmse);
    }

    #[test]
    fn failing_cells_do_not_stop_the_grid() {
        let m = Maze::preset("umaze").unwrap();
        let ds = Dataset::new(scripted_collect(&m, CollectStyle::Diverse, 5, 100, 0).unwrap(), None).unwrap();
        let cfg = AblationConfig {
            specs: vec![RelabelSpec::new(2, 1).unwrap(), RelabelSpec::new(4, 1).unwrap()],
            seeds: vec![0],
            train: TrainConfig {
                hidden: vec![4, 4],
                batch_size: 8,
                total_steps: 2,
                ..TrainConfig::desk()
            },
            episodes: 1,
            goals: GoalSpec::Designated,
            planner: PlannerConfig::new(5),
            // 6 is not a multiple of 4, so only the second cell fails
            h_max: Some(6),
            rmse_stride: 1,
        };
        let cells = ablation_grid(&ds, &ds.trajectories, &m, &cfg).unwrap();
        assert!(cells[0].error.is_none());
        assert!(cells[1].error.as_ref().unwrap().contains("multiple"));
        let mut out = Vec::new();
        write_ablation_csv(&mut out, &cells).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains("NaN"));
    }
}

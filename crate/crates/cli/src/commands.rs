//! One function per subcommand. Each resolves its config, echoes it, does the
//! work, writes its files and prints one summary line.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde_json::json;

use rsp_core::analysis::{
    ablation_grid, draw_task, evaluate, latency_bench, rollout_rmse, write_ablation_csv,
    write_latency_csv, write_rmse_csv, AblationConfig, EvalConfig, GoalSpec, LatencyStats,
};
use rsp_core::dataset::{
    horizons, read_dataset, write_dataset, Dataset, GoalMode, NormStats, RelabelSpec, ACTION_DIM,
    STATE_DIM,
};
use rsp_core::env::{collect_with, CollectConfig, CollectStyle, Maze};
use rsp_core::learner::{
    gcsl_table, load_bundle, rsp_table, save_bundle, train_gcsl, train_rsp, untrained_rsp, Bundle,
    Method, TrainConfig,
};
use rsp_core::planner::{rollout, write_traces_jsonl, PlannerConfig};

use crate::config::{Layered, List, Resolved};
use crate::CliError;

type Res<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<out>.config` and echoes it on stderr.
fn echo(out: &Path, resolved: &Resolved) -> Res<()> {
    let text = resolved.to_string();
    eprint!("{text}");
    let p = with_suffix(out, ".config");
    let mut w = create(&p)?;
    w.write_all(text.as_bytes()).map_err(|e| io_err(&p, e))?;
    w.flush().map_err(|e| io_err(&p, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Res<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn csv_out<F>(path: &Path, f: F) -> Res<()>
where
    F: FnOnce(BufWriter<File>) -> csv::Result<()>,
{
    f(create(path)?).map_err(|e| io_err(path, e))
}

/// `K:N` grid entry.
#[derive(Debug, Clone, Copy)]
struct SpecArg(usize, usize);

impl FromStr for SpecArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (k, n) = s.split_once(':').ok_or_else(|| format!("expected K:N, got `{s}`"))?;
        let k = k.trim().parse().map_err(|_| format!("bad K in `{s}`"))?;
        let n = n.trim().parse().map_err(|_| format!("bad N in `{s}`"))?;
        Ok(SpecArg(k, n))
    }
}

impl Display for SpecArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

/// Reads `env` (preset name) and optional `layout` (ASCII file).
fn maze_keys(c: &mut Layered, default_env: Option<String>) -> Res<(String, Option<String>)> {
    let env = match default_env {
        Some(d) => c.get("env", d)?,
        None => c.req("env")?,
    };
    let layout: Option<String> = c.opt("layout")?;
    Ok((env, layout))
}

fn load_maze(env: &str, layout: Option<&str>) -> Res<Maze> {
    match layout {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(Path::new(p), e))?;
            Ok(Maze::from_ascii_named(env, &text)?)
        }
        None => Ok(Maze::preset(env)?),
    }
}

fn train_keys(c: &mut Layered) -> Res<TrainConfig> {
    let preset: String = c.get("train.preset", "desk".to_owned())?;
    let base = match preset.as_str() {
        "desk" => TrainConfig::desk(),
        "full" => TrainConfig::default(),
        other => {
            return Err(CliError::Config(format!(
                "unknown train.preset `{other}` (expected desk or full)"
            )))
        }
    };
    Ok(TrainConfig {
        batch_size: c.get("train.batch_size", base.batch_size)?,
        lr_max: c.get("train.lr_max", base.lr_max)?,
        total_steps: c.get("train.total_steps", base.total_steps)?,
        dropout: c.get("train.dropout", base.dropout)?,
        hidden: c.get("train.hidden", List(base.hidden))?.0,
        seed: c.get("train.seed", base.seed)?,
    })
}

fn planner_keys(c: &mut Layered) -> Res<PlannerConfig> {
    let d = PlannerConfig::new(1000);
    Ok(PlannerConfig {
        replan_every: c.get("planner.replan_every", d.replan_every)?,
        max_steps: c.get("planner.max_steps", d.max_steps)?,
        action_clip: c.get("planner.action_clip", d.action_clip)?,
    })
}

fn seed_list(c: &mut Layered, default_count: u64) -> Res<Vec<u64>> {
    let n: u64 = c.get("seeds", default_count)?;
    let base: u64 = c.get("seed_base", 0)?;
    if n == 0 {
        return Err(CliError::Config("seeds must be at least 1".into()));
    }
    Ok((base..base + n).collect())
}

pub fn gen_data(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let (env, layout) = maze_keys(&mut c, Some("corridor".into()))?;
    let d = CollectConfig::new(CollectStyle::Diverse, 64, 1000, 0);
    let cfg = CollectConfig {
        style: c.get("style", d.style)?,
        n_traj: c.get("n_traj", d.n_traj)?,
        max_len: c.get("max_len", d.max_len)?,
        seed: c.get("seed", d.seed)?,
        action_noise: c.get("action_noise", d.action_noise)?,
        retarget_prob: c.get("retarget_prob", d.retarget_prob)?,
        min_distance: c.get("min_distance", d.min_distance)?,
    };
    let out = PathBuf::from(c.get("out", "data.rspd".to_owned())?);
    let resolved = c.finish()?;
    let maze = load_maze(&env, layout.as_deref())?;
    let trajs = collect_with(&maze, &cfg)?;
    let ds = Dataset::new(trajs, Some(env.clone()))?;
    echo(&out, &resolved)?;
    write_dataset(&out, &ds)?;

    let lens: Vec<usize> = ds.trajectories.iter().map(|t| t.len()).collect();
    let summary = json!({
        "run": resolved.to_json(),
        "trajectories": lens.len(),
        "total_steps": ds.total_steps(),
        "length_min": lens.iter().min(),
        "length_max": lens.iter().max(),
        "length_mean": ds.total_steps() as f64 / lens.len() as f64,
        "norm": ds.norm,
    });
    write_json(&with_suffix(&out, ".json"), &summary)?;
    println!(
        "wrote {}: {} trajectories, {} steps on {env}",
        out.display(),
        lens.len(),
        ds.total_steps()
    );
    Ok(())
}

pub fn train(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let data = PathBuf::from(c.req::<String>("data")?);
    let out = PathBuf::from(c.get("out", "bundle.rspb".to_owned())?);
    let method: Method = c.get("method", Method::Rsp)?;
    let k: usize = c.get("relabel.K", 32)?;
    let n: usize = c.get("relabel.N", 1)?;
    let goal_mode: GoalMode = c.get("relabel.goal_mode", GoalMode::FinalState)?;
    let cfg = train_keys(&mut c)?;
    let relabel_seed: u64 = c.get("relabel.seed", cfg.seed)?;
    let loss_csv = PathBuf::from(c.get("loss_csv", with_suffix(&out, ".loss.csv").display().to_string())?);
    let spec = RelabelSpec {
        top_horizon: k,
        depth: n,
        goal_mode,
    };
    if method == Method::Rsp {
        let h = horizons(&spec)?;
        c.derive("relabel.horizons", format!("{h:?}"));
        c.derive("relabel.label", spec.label());
    }
    let resolved = c.finish()?;
    cfg.validate()?;

    let ds = read_dataset(&data)?;
    echo(&out, &resolved)?;
    let t0 = Instant::now();
    let (mut bundle, trace) = match method {
        Method::Rsp => {
            let table = rsp_table(&ds, &spec, relabel_seed)?;
            let (stack, policy, trace) = train_rsp(&table, &ds.norm, &spec, &cfg)?;
            (Bundle::rsp(stack, policy), trace)
        }
        Method::Gcsl => {
            let table = gcsl_table(&ds, relabel_seed)?;
            let (policy, trace) = train_gcsl(&table, &ds.norm, &cfg)?;
            (Bundle::gcsl(policy), trace)
        }
    };
    bundle.train = Some(cfg.clone());
    bundle.env = ds.env.clone();
    save_bundle(&out, &bundle)?;
    csv_out(&loss_csv, |w| trace.write_csv(w))?;

    let finals: serde_json::Map<String, serde_json::Value> = trace
        .model_ids
        .iter()
        .map(|id| (id.clone(), json!(trace.series(id).last().copied())))
        .collect();
    let summary = json!({
        "run": resolved.to_json(),
        "method": method,
        "horizons": bundle.header().horizons,
        "model_dims": bundle.header().model_dims,
        "final_loss": finals,
        "train_seconds": t0.elapsed().as_secs_f64(),
    });
    write_json(&with_suffix(&out, ".json"), &summary)?;
    let losses: Vec<String> = finals.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!(
        "wrote {}: {method} {} after {} steps, final loss {}",
        out.display(),
        bundle.spec().map(|s| s.label()).unwrap_or_default(),
        cfg.total_steps,
        losses.join(", ")
    );
    Ok(())
}

pub fn eval(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let bundle_path = PathBuf::from(c.req::<String>("bundle")?);
    let env: Option<String> = c.opt("env")?;
    let layout: Option<String> = c.opt("layout")?;
    let episodes: usize = c.get("episodes", 100)?;
    let seeds = seed_list(&mut c, 10)?;
    let goals: GoalSpec = c.get("goals", GoalSpec::RandomPairs { min_distance: 1 })?;
    let planner = planner_keys(&mut c)?;
    let out = PathBuf::from(c.get("out", "eval.json".to_owned())?);
    let traces: Option<String> = c.opt("traces")?;
    let resolved = c.finish()?;
    let cfg = EvalConfig {
        episodes,
        seeds,
        goals,
        planner,
    };
    cfg.validate()?;

    let bundle = load_bundle(&bundle_path)?;
    let env = env.or_else(|| bundle.env.clone()).ok_or_else(|| {
        CliError::Config("bundle does not record an environment; set `env`".into())
    })?;
    let maze = load_maze(&env, layout.as_deref())?;
    echo(&out, &resolved)?;
    let report = evaluate(&bundle, &maze, &cfg)?;
    if let Some(p) = traces {
        // first episode of every seed, in seed order
        let p = PathBuf::from(p);
        let mut w = create(&p)?;
        for &seed in &cfg.seeds {
            let (start, goal) = draw_task(&maze, cfg.goals, seed, 0)?;
            let ep = rollout(&maze, &bundle, start, &goal, &cfg.planner)?;
            write_traces_jsonl(&mut w, &ep.traces).map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))?;
    }
    write_json(&out, &json!({ "run": resolved.to_json(), "env": env, "report": report }))?;
    println!(
        "success {:.3} ± {:.3} over {} episodes on {env} (mean length {:.1}, latency {:.0} us)",
        report.success_rate, report.stderr, report.episodes, report.mean_len, report.latency_mean_us
    );
    Ok(())
}

pub fn rmse(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let bundle_path = PathBuf::from(c.req::<String>("bundle")?);
    let data = PathBuf::from(c.req::<String>("data")?);
    let h_max: usize = c.get("h_max", 256)?;
    let stride: usize = c.get("stride", 16)?;
    let out = PathBuf::from(c.get("out", "rmse_curves.csv".to_owned())?);
    let resolved = c.finish()?;

    let bundle = load_bundle(&bundle_path)?;
    let Some(stack) = bundle.stack.as_ref() else {
        return Err(CliError::Config("rollout RMSE needs an rsp bundle with a dynamics stack".into()));
    };
    let k = stack.spec.lowest_horizon();
    if h_max == 0 || h_max % k != 0 {
        return Err(CliError::Config(format!(
            "h_max={h_max} must be a positive multiple of the lowest horizon k={k}"
        )));
    }
    let ds = read_dataset(&data)?;
    echo(&out, &resolved)?;
    let curve = rollout_rmse(stack, &ds.trajectories, h_max, stride)?;
    csv_out(&out, |w| write_rmse_csv(w, std::slice::from_ref(&curve)))?;
    write_json(&with_suffix(&out, ".json"), &json!({ "run": resolved.to_json(), "curve": curve }))?;
    println!(
        "{} RMSE at offset {h_max}: {:.4} over {} rollouts",
        curve.label,
        curve.rmse.last().copied().unwrap_or(f64::NAN),
        curve.count
    );
    Ok(())
}

pub fn ablate(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let data = PathBuf::from(c.req::<String>("data")?);
    let eval_data: Option<String> = c.opt("eval_data")?;
    let env: Option<String> = c.opt("env")?;
    let layout: Option<String> = c.opt("layout")?;
    let specs: List<SpecArg> = c.get(
        "specs",
        List(vec![SpecArg(32, 1), SpecArg(16, 1), SpecArg(4, 1), SpecArg(1, 1)]),
    )?;
    let seeds = seed_list(&mut c, 3)?;
    let train = train_keys(&mut c)?;
    let episodes: usize = c.get("episodes", 100)?;
    let goals: GoalSpec = c.get("goals", GoalSpec::RandomPairs { min_distance: 1 })?;
    let planner = planner_keys(&mut c)?;
    let h_max: Option<usize> = c.opt("h_max")?;
    let rmse_stride: usize = c.get("rmse.stride", 16)?;
    let out = PathBuf::from(c.get("out", "ablation.csv".to_owned())?);
    let curves_path = h_max
        .map(|_| {
            let d = out.with_file_name("rmse_curves.csv").display().to_string();
            c.get("curves", d)
        })
        .transpose()?;
    let resolved = c.finish()?;
    let specs: Vec<RelabelSpec> = specs
        .0
        .iter()
        .map(|s| RelabelSpec::new(s.0, s.1))
        .collect::<rsp_core::Result<_>>()?;
    train.validate()?;
    let cfg = AblationConfig {
        specs,
        seeds,
        train,
        episodes,
        goals,
        planner,
        h_max,
        rmse_stride,
    };

    let ds = read_dataset(&data)?;
    let eval_trajs = match &eval_data {
        Some(p) => read_dataset(Path::new(p))?.trajectories,
        None => ds.trajectories.clone(),
    };
    let env = env.or_else(|| ds.env.clone()).ok_or_else(|| {
        CliError::Config("dataset does not record an environment; set `env`".into())
    })?;
    let maze = load_maze(&env, layout.as_deref())?;
    echo(&out, &resolved)?;
    let cells = ablation_grid(&ds, &eval_trajs, &maze, &cfg)?;
    csv_out(&out, |w| write_ablation_csv(w, &cells))?;
    if let Some(p) = &curves_path {
        let curves: Vec<_> = cells.iter().filter_map(|c| c.curve.clone()).collect();
        csv_out(Path::new(p), |w| write_rmse_csv(w, &curves))?;
    }
    write_json(&with_suffix(&out, ".json"), &json!({ "run": resolved.to_json(), "cells": cells }))?;
    let parts: Vec<String> = cells
        .iter()
        .map(|c| match &c.report {
            Some(r) => format!("{} {:.3}", c.label, r.success_rate),
            None => format!("{} failed", c.label),
        })
        .collect();
    println!("success by config: {}", parts.join(", "));
    Ok(())
}

pub fn latency(file: Option<&Path>, kv: Vec<(String, String)>) -> Res<()> {
    let mut c = Layered::new(file, kv)?;
    let bundle_path: Option<String> = c.opt("bundle")?;
    let (env, layout) = maze_keys(&mut c, Some("ultra".into()))?;
    let decisions: usize = c.get("decisions", 10_000)?;
    let seed: u64 = c.get("seed", 0)?;
    let out = PathBuf::from(c.get("out", "latency.csv".to_owned())?);
    let synthetic = match bundle_path {
        Some(_) => None,
        None => {
            let depths: List<usize> = c.get("depths", List(vec![1, 2, 3, 4]))?;
            let k: usize = c.get("relabel.K", 32)?;
            let hidden: List<usize> = c.get("train.hidden", List(vec![1024, 1024]))?;
            Some((depths.0, k, hidden.0))
        }
    };
    let resolved = c.finish()?;
    let maze = load_maze(&env, layout.as_deref())?;

    let mut stats: Vec<LatencyStats> = Vec::new();
    match (&bundle_path, synthetic) {
        (Some(p), _) => {
            let bundle = load_bundle(Path::new(p))?;
            let label = bundle.spec().map(|s| s.label()).unwrap_or_else(|| "gcsl".into());
            echo(&out, &resolved)?;
            stats.push(latency_bench(&bundle, &maze, &label, decisions, seed)?);
        }
        (None, Some((depths, k, hidden))) => {
            let norm = NormStats::identity(STATE_DIM, ACTION_DIM);
            let cfg = TrainConfig {
                hidden,
                seed,
                ..TrainConfig::desk()
            };
            let bundles: Vec<(String, Bundle)> = depths
                .iter()
                .map(|&n| {
                    let spec = RelabelSpec::new(k, n)?;
                    let (stack, policy) = untrained_rsp(&norm, &spec, &cfg)?;
                    Ok((format!("N={n}"), Bundle::rsp(stack, policy)))
                })
                .collect::<rsp_core::Result<_>>()?;
            echo(&out, &resolved)?;
            for (label, b) in &bundles {
                stats.push(latency_bench(b, &maze, label, decisions, seed)?);
            }
        }
        (None, None) => unreachable!("synthetic keys are read when no bundle is given"),
    }
    csv_out(&out, |w| write_latency_csv(w, &stats))?;
    write_json(&with_suffix(&out, ".json"), &json!({ "run": resolved.to_json(), "latency": stats }))?;
    let parts: Vec<String> = stats
        .iter()
        .map(|s| format!("{} {:.1} us", s.label, s.mean_us))
        .collect();
    println!("mean plan+act latency over {decisions} decisions: {}", parts.join(", "));
    Ok(())
}

//! `rsp`: data generation, training, evaluation and analysis runs.
//!
//! Every subcommand takes `--config <file>` with flat `key = value` lines.
//! Flags override file values. Exit codes: 0 success, 1 runtime failure,
//! 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<rsp_core::Error> for CliError {
    fn from(e: rsp_core::Error) -> Self {
        match e {
            rsp_core::Error::Config(m) => CliError::Config(m),
            e if e.is_config() => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "rsp", version, about = "Recursive skip-step planning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect scripted trajectories into an RSPD1 dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        style: Option<String>,
        #[arg(long)]
        n_traj: Option<String>,
        #[arg(long)]
        max_len: Option<String>,
        #[arg(long)]
        min_distance: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel a dataset and train an RSP or GCSL bundle.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long = "K")]
        k: Option<String>,
        #[arg(long = "N")]
        n: Option<String>,
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        batch_size: Option<String>,
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Success rate of a bundle over seeded start/goal draws.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        episodes: Option<String>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        goals: Option<String>,
        #[arg(long)]
        max_steps: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSONL plan traces of the first episode of every seed.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Chained skip-step prediction error against logged trajectories.
    Rmse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        h_max: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate a grid of (K, N) configs.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        specs: Option<String>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        episodes: Option<String>,
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-decision plan+act latency by recursion depth.
    Latency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        depths: Option<String>,
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        decisions: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag overrides as config pairs, `--set` first so named flags win.
fn overrides(common: &Common, named: &[(&str, Option<String>)]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    out.extend(
        named
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))),
    );
    Ok(out)
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RSP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RSP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.cmd {
        Cmd::GenData { common, env, style, n_traj, max_len, min_distance, seed, out } => {
            let kv = overrides(
                &common,
                &[
                    ("env", env),
                    ("style", style),
                    ("n_traj", n_traj),
                    ("max_len", max_len),
                    ("min_distance", min_distance),
                    ("seed", seed),
                    ("out", path(&out)),
                ],
            )?;
            commands::gen_data(common.config.as_deref(), kv)
        }
        Cmd::Train { common, data, out, method, k, n, steps, batch_size, hidden, seed } => {
            let kv = overrides(
                &common,
                &[
                    ("data", path(&data)),
                    ("out", path(&out)),
                    ("method", method),
                    ("relabel.K", k),
                    ("relabel.N", n),
                    ("train.total_steps", steps),
                    ("train.batch_size", batch_size),
                    ("train.hidden", hidden),
                    ("train.seed", seed),
                ],
            )?;
            commands::train(common.config.as_deref(), kv)
        }
        Cmd::Eval { common, bundle, env, episodes, seeds, goals, max_steps, out, traces } => {
            let kv = overrides(
                &common,
                &[
                    ("bundle", path(&bundle)),
                    ("env", env),
                    ("episodes", episodes),
                    ("seeds", seeds),
                    ("goals", goals),
                    ("planner.max_steps", max_steps),
                    ("out", path(&out)),
                    ("traces", path(&traces)),
                ],
            )?;
            commands::eval(common.config.as_deref(), kv)
        }
        Cmd::Rmse { common, bundle, data, h_max, out } => {
            let kv = overrides(
                &common,
                &[
                    ("bundle", path(&bundle)),
                    ("data", path(&data)),
                    ("h_max", h_max),
                    ("out", path(&out)),
                ],
            )?;
            commands::rmse(common.config.as_deref(), kv)
        }
        Cmd::Ablate { common, data, specs, seeds, episodes, steps, out } => {
            let kv = overrides(
                &common,
                &[
                    ("data", path(&data)),
                    ("specs", specs),
                    ("seeds", seeds),
                    ("episodes", episodes),
                    ("train.total_steps", steps),
                    ("out", path(&out)),
                ],
            )?;
            commands::ablate(common.config.as_deref(), kv)
        }
        Cmd::Latency { common, bundle, env, depths, hidden, decisions, out } => {
            let kv = overrides(
                &common,
                &[
                    ("bundle", path(&bundle)),
                    ("env", env),
                    ("depths", depths),
                    ("train.hidden", hidden),
                    ("decisions", decisions),
                    ("out", path(&out)),
                ],
            )?;
            commands::latency(common.config.as_deref(), kv)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

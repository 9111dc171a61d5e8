//! Per-decision plan+act timing, excluding environment stepping.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::quantile;
use crate::env::{Maze, PointState, V_MAX};
use crate::error::{Error, Result};
use crate::planner::Agent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub label: String,
    pub decisions: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
}

/// Times `decisions` plan+act calls on random in-maze states after a warm-up.
pub fn latency_bench<A: Agent + ?Sized>(
    agent: &A,
    maze: &Maze,
    label: &str,
    decisions: usize,
    seed: u64,
) -> Result<LatencyStats> {
    if decisions == 0 {
        return Err(Error::config("decisions must be positive"));
    }
    let cells = maze.open_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(PointState, [f32; 2])> = (0..256)
        .map(|_| {
            let c = Maze::cell_center(cells[rng.random_range(0..cells.len())]);
            let g = Maze::cell_center(cells[rng.random_range(0..cells.len())]);
            let s = PointState {
                pos: c,
                vel: [rng.random_range(-V_MAX..V_MAX), rng.random_range(-V_MAX..V_MAX)],
            };
            (s, g)
        })
        .collect();
    let mut decide = |i: usize| -> Result<f64> {
        let (s, g) = &inputs[i % inputs.len()];
        let t0 = Instant::now();
        let plan = agent.plan(s, *g)?;
        let a = agent.act(s, *g, &plan)?;
        let dt = t0.elapsed().as_secs_f64() * 1e6;
        std::hint::black_box(a);
        Ok(dt)
    };
    for i in 0..(decisions / 10).max(100) {
        decide(i)?;
    }
    let mut times = (0..decisions).map(&mut decide).collect::<Result<Vec<f64>>>()?;
    let mean_us = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        label: label.to_owned(),
        decisions,
        mean_us,
        p50_us: quantile(&times, 0.5),
        p95_us: quantile(&times, 0.95),
    })
}

/// `config,decisions,mean_us,p50_us,p95_us`.
pub fn write_latency_csv<W: Write>(w: W, stats: &[LatencyStats]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["config", "decisions", "mean_us", "p50_us", "p95_us"])?;
    for s in stats {
        out.serialize((&s.label, s.decisions, s.mean_us, s.p50_us, s.p95_us))?;
    }
    out.flush()?;
    Ok(())
}

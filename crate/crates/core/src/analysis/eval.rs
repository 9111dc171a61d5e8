//! Success-rate evaluation over seeded start/goal draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Goal, Maze, PointState};
use crate::error::{Error, Result};
use crate::planner::{rollout, Agent, PlannerConfig};

/// How evaluation tasks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GoalSpec {
    /// The layout's designated start and goal cells, positions jittered within the cell.
    Designated,
    /// Random open start and goal cells at least `min_distance` BFS steps apart.
    RandomPairs { min_distance: u32 },
}

impl std::str::FromStr for GoalSpec {
    type Err = Error;

    /// `designated` or `random:<min_distance>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "designated" {
            return Ok(Self::Designated);
        }
        if let Some(d) = s.strip_prefix("random:") {
            let min_distance = d
                .parse()
                .map_err(|_| Error::config(format!("bad minimum distance in `{s}`")))?;
            return Ok(Self::RandomPairs { min_distance });
        }
        Err(Error::config(format!(
            "unknown goal spec `{s}` (expected designated or random:<cells>)"
        )))
    }
}

impl std::fmt::Display for GoalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Designated => f.write_str("designated"),
            Self::RandomPairs { min_distance } => write!(f, "random:{min_distance}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub goals: GoalSpec,
    pub planner: PlannerConfig,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.seeds.is_empty() {
            return Err(Error::config("need at least one episode and one seed"));
        }
        self.planner.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    pub steps: usize,
    pub start: [f32; 2],
    pub goal: [f32; 2],
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`.
    pub stderr: f64,
    pub successes: usize,
    pub episodes: usize,
    pub mean_len: f64,
    pub median_len: f64,
    pub latency_mean_us: f64,
    pub latency_p95_us: f64,
    pub seeds: Vec<u64>,
    /// Success rate of each seed, in `seeds` order.
    pub per_seed: Vec<f64>,
    pub records: Vec<EpisodeRecord>,
}

/// `q`-quantile by nearest rank of a sorted slice.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn jitter(cell: (usize, usize), rng: &mut ChaCha8Rng) -> [f32; 2] {
    let c = Maze::cell_center(cell);
    [
        c[0] + rng.random_range(-0.25f32..0.25),
        c[1] + rng.random_range(-0.25f32..0.25),
    ]
}

/// Uniform start cell, then a uniform goal among cells at least `min_distance` away.
/// Starts without such a goal are redrawn.
fn random_pair(maze: &Maze, min_distance: u32, rng: &mut ChaCha8Rng) -> Result<((usize, usize), (usize, usize))> {
    let cells = maze.open_cells();
    for _ in 0..10_000 {
        let s = cells[rng.random_range(0..cells.len())];
        let dist = maze.bfs_distances(s);
        let far: Vec<_> = cells
            .iter()
            .copied()
            .filter(|&(r, c)| dist[r * maze.cols() + c].is_some_and(|d| d >= min_distance))
            .collect();
        if !far.is_empty() {
            return Ok((s, far[rng.random_range(0..far.len())]));
        }
    }
    Err(Error::config(format!(
        "no open cells in `{}` are {min_distance} steps apart",
        maze.name()
    )))
}

/// Start state and goal of episode `episode` under `seed`.
pub fn draw_task(maze: &Maze, goals: GoalSpec, seed: u64, episode: usize) -> Result<(PointState, Goal)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    let (s, g) = match goals {
        GoalSpec::Designated => {
            let s = maze.designated_start().ok_or_else(|| {
                Error::config(format!("maze `{}` has no designated start", maze.name()))
            })?;
            let g = maze.designated_goal().ok_or_else(|| {
                Error::config(format!("maze `{}` has no designated goal", maze.name()))
            })?;
            (s, g)
        }
        GoalSpec::RandomPairs { min_distance } => random_pair(maze, min_distance, &mut rng)?,
    };
    let start = PointState::at_rest(jitter(s, &mut rng));
    let goal = Goal::new(jitter(g, &mut rng));
    Ok((start, goal))
}

/// Evaluates one agent under every seed.
pub fn evaluate<A: Agent + Sync + ?Sized>(agent: &A, maze: &Maze, cfg: &EvalConfig) -> Result<EvalReport> {
    let agents: Vec<(u64, &A)> = cfg.seeds.iter().map(|&s| (s, agent)).collect();
    evaluate_per_seed(&agents, maze, cfg.episodes, cfg.goals, &cfg.planner)
}

/// Evaluates a possibly different agent per seed; `episodes` episodes each.
pub fn evaluate_per_seed<A: Agent + Sync + ?Sized>(
    agents: &[(u64, &A)],
    maze: &Maze,
    episodes: usize,
    goals: GoalSpec,
    planner: &PlannerConfig,
) -> Result<EvalReport> {
    if episodes == 0 || agents.is_empty() {
        return Err(Error::config("need at least one episode and one seed"));
    }
    planner.validate()?;
    let jobs: Vec<(u64, usize, &A)> = agents
        .iter()
        .flat_map(|&(seed, a)| (0..episodes).map(move |e| (seed, e, a)))
        .collect();
    // task draws can fail on bad configs; check once up front
    draw_task(maze, goals, jobs[0].0, 0)?;
    let results: Vec<(EpisodeRecord, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(seed, episode, agent)| {
            let (start, goal) = draw_task(maze, goals, seed, episode)?;
            let ep = rollout(maze, agent, start, &goal, planner)?;
            let lat = ep.traces.iter().map(|t| t.latency_us).collect();
            Ok((
                EpisodeRecord {
                    seed,
                    episode,
                    success: ep.success,
                    steps: ep.steps(),
                    start: start.pos,
                    goal: goal.pos,
                    failure: ep.failure,
                },
                lat,
            ))
        })
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = agents.iter().map(|a| a.0).collect();
    let mut latencies = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    for (r, l) in results {
        records.push(r);
        latencies.extend(l);
    }
    Ok(report(records, seeds, latencies))
}

fn report(records: Vec<EpisodeRecord>, seeds: Vec<u64>, mut latencies: Vec<f64>) -> EvalReport {
    let n = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let p = successes as f64 / n as f64;
    let mut lens: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
    lens.sort_by(f64::total_cmp);
    let median_len = if n % 2 == 1 {
        lens[n / 2]
    } else {
        0.5 * (lens[n / 2 - 1] + lens[n / 2])
    };
    latencies.sort_by(f64::total_cmp);
    let per_seed = seeds
        .iter()
        .map(|&s| {
            let mine: Vec<_> = records.iter().filter(|r| r.seed == s).collect();
            mine.iter().filter(|r| r.success).count() as f64 / mine.len().max(1) as f64
        })
        .collect();
    EvalReport {
        success_rate: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
        successes,
        episodes: n,
        mean_len: lens.iter().sum::<f64>() / n as f64,
        median_len,
        latency_mean_us: if latencies.is_empty() {
            0.0
        } else {
            latencies.iter().sum::<f64>() / latencies.len() as f64
        },
        latency_p95_us: quantile(&latencies, 0.95),
        seeds,
        per_seed,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DT;
    use crate::planner::Plan;

    /// Brakes toward the goal along the straight line; fine in an open field.
    struct Straight;

    impl Agent for Straight {
        fn plan(&self, _: &PointState, _: [f32; 2]) -> Result<Plan> {
            Ok(Plan::default())
        }

        fn act(&self, s: &PointState, g: [f32; 2], _: &Plan) -> Result<[f32; 2]> {
            Ok(std::array::from_fn(|d| {
                let v_des = ((g[d] - s.pos[d]) * 0.5).clamp(-0.8, 0.8);
                ((v_des - s.vel[d]) / DT).clamp(-1.0, 1.0)
            }))
        }
    }

    struct Still;

    impl Agent for Still {
        fn plan(&self, _: &PointState, _: [f32; 2]) -> Result<Plan> {
            Ok(Plan::default())
        }

        fn act(&self, _: &PointState, _: [f32; 2], _: &Plan) -> Result<[f32; 2]> {
            Ok([0.0, 0.0])
        }
    }

    fn field() -> Maze {
        Maze::from_ascii("##########\n#S.......#\n#........#\n#........#\n#.......G#\n##########").unwrap()
    }

    fn cfg(goals: GoalSpec, seeds: Vec<u64>, episodes: usize) -> EvalConfig {
        EvalConfig {
            episodes,
            seeds,
            goals,
            planner: PlannerConfig::new(200),
        }
    }

    #[test]
    fn straight_line_oracle_always_succeeds() {
        let m = field();
        for goals in [GoalSpec::Designated, GoalSpec::RandomPairs { min_distance: 4 }] {
            let r = evaluate(&Straight, &m, &cfg(goals, vec![0, 1, 2], 20)).unwrap();
            assert_eq!(r.success_rate, 1.0, "{goals:?}");
            assert_eq!(r.episodes, 60);
            assert_eq!(r.per_seed, vec![1.0; 3]);
        }
    }

    #[test]
    fn static_agent_succeeds_only_where_it_starts() {
        let m = Maze::from_ascii("####\n#..#\n####").unwrap();
        let r = evaluate(&Still, &m, &cfg(GoalSpec::RandomPairs { min_distance: 0 }, vec![3, 4], 100)).unwrap();
        let inside = r
            .records
            .iter()
            .filter(|e| {
                let d = ((e.start[0] - e.goal[0]).powi(2) + (e.start[1] - e.goal[1]).powi(2)).sqrt();
                d <= 0.5
            })
            .count();
        assert!(inside > 0 && inside < 200);
        assert_eq!(r.successes, inside);
        // report integrity
        assert_eq!((r.success_rate * r.episodes as f64).round() as usize, r.successes);
        let p = r.success_rate;
        assert!((r.stderr - (p * (1.0 - p) / 200.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tasks_are_seeded() {
        let m = field();
        let spec = GoalSpec::RandomPairs { min_distance: 3 };
        let a = draw_task(&m, spec, 5, 17).unwrap();
        assert_eq!(a, draw_task(&m, spec, 5, 17).unwrap());
        assert_ne!(a, draw_task(&m, spec, 6, 17).unwrap());
        assert!(matches!(
            draw_task(&m, GoalSpec::RandomPairs { min_distance: 500 }, 0, 0),
            Err(Error::Config(_))
        ));
        let plain = Maze::from_ascii("####\n#..#\n####").unwrap();
        assert!(draw_task(&plain, GoalSpec::Designated, 0, 0).is_err());
    }

    #[test]
    fn goal_spec_parses() {
        assert_eq!("designated".parse::<GoalSpec>().unwrap(), GoalSpec::Designated);
        assert_eq!(
            "random:40".parse::<GoalSpec>().unwrap(),
            GoalSpec::RandomPairs { min_distance: 40 }
        );
        assert!("random:x".parse::<GoalSpec>().is_err());
        assert!("far".parse::<GoalSpec>().is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.95), 4.0);
        assert_eq!(quantile(&[], 0.5), 0.0);
    }
}

//! Scripted goal-directed data collection.
//!
//! Each trajectory follows the BFS cell path from a random open start to a
//! random open target with a speed-limited proportional controller plus
//! Gaussian action noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maze::{Cell, Maze};
use super::point::{env_step, success, Goal, PointState, DT};
use crate::error::{Error, Result};

/// How targets are chosen during a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectStyle {
    /// Keeps going for `max_len` steps, drawing a new target whenever the
    /// current one is reached and occasionally before.
    Play,
    /// One target per trajectory; the trajectory ends when it is reached.
    Diverse,
}

impl std::str::FromStr for CollectStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "play" => Ok(Self::Play),
            "diverse" => Ok(Self::Diverse),
            other => Err(Error::config(format!(
                "unknown collection style `{other}` (expected play or diverse)"
            ))),
        }
    }
}

impl std::fmt::Display for CollectStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Play => "play",
            Self::Diverse => "diverse",
        })
    }
}

/// One logged episode. `actions[t]` was applied in `states[t]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<PointState>,
    pub actions: Vec<[f32; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Final position reached.
    pub fn achieved_goal(&self) -> [f32; 2] {
        self.states.last().map(|s| s.pos).unwrap_or_default()
    }

    /// Re-steps every logged action from `states[0]` and checks bit-exact agreement.
    ///
    /// Evaluation episodes end in a terminal state with no action, so one more
    /// state than actions is accepted.
    pub fn replays_exactly(&self, maze: &Maze) -> bool {
        let (ns, na) = (self.states.len(), self.actions.len());
        if ns != na && ns != na + 1 {
            return false;
        }
        self.states.windows(2).zip(&self.actions).all(|(w, &a)| {
            env_step(maze, &w[0], a).is_ok_and(|next| next == w[1])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub style: CollectStyle,
    pub n_traj: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to controller actions.
    pub action_noise: f32,
    /// Per-step probability that a play-style collector abandons its target.
    pub retarget_prob: f64,
    /// Targets are drawn among cells at least this many BFS steps from the current cell.
    pub min_distance: u32,
}

impl CollectConfig {
    pub fn new(style: CollectStyle, n_traj: usize, max_len: usize, seed: u64) -> Self {
        Self {
            style,
            n_traj,
            max_len,
            seed,
            action_noise: 0.2,
            retarget_prob: 0.005,
            min_distance: 0,
        }
    }
}

/// Collects `n_traj` trajectories with the default noise settings.
pub fn scripted_collect(
    maze: &Maze,
    style: CollectStyle,
    n_traj: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    collect_with(maze, &CollectConfig::new(style, n_traj, max_len, seed))
}

/// Collects trajectories; trajectory `i` draws from its own stream `(seed, i)`.
pub fn collect_with(maze: &Maze, cfg: &CollectConfig) -> Result<Vec<Trajectory>> {
    if cfg.n_traj == 0 {
        return Err(Error::config("n_traj must be positive"));
    }
    if cfg.max_len < 2 {
        return Err(Error::config("max_len must be at least 2"));
    }
    if !(cfg.action_noise >= 0.0) {
        return Err(Error::config("action noise must be non-negative"));
    }
    let cells = maze.open_cells();
    if cells.len() < 2 {
        return Err(Error::Layout("need at least two open cells to collect data".into()));
    }
    let reachable = cells.iter().any(|&c| {
        maze.bfs_distances(c)
            .iter()
            .any(|d| d.is_some_and(|d| d >= cfg.min_distance))
    });
    if !reachable {
        return Err(Error::config(format!(
            "no two cells of `{}` are {} steps apart",
            maze.name(),
            cfg.min_distance
        )));
    }
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            collect_one(maze, &cells, cfg, &mut rng)
        })
        .collect()
}

fn jittered_center(cell: Cell, rng: &mut ChaCha8Rng) -> [f32; 2] {
    let c = Maze::cell_center(cell);
    [
        c[0] + rng.random_range(-0.25f32..0.25),
        c[1] + rng.random_range(-0.25f32..0.25),
    ]
}

/// Uniform target among cells at least `min_distance` (and at least one) steps from `from`.
fn pick_target(maze: &Maze, cells: &[Cell], from: Cell, min_distance: u32, rng: &mut ChaCha8Rng) -> Option<Cell> {
    let dist = maze.bfs_distances(from);
    let far: Vec<Cell> = cells
        .iter()
        .copied()
        .filter(|&(r, c)| dist[r * maze.cols() + c].is_some_and(|d| d >= min_distance.max(1)))
        .collect();
    (!far.is_empty()).then(|| far[rng.random_range(0..far.len())])
}

fn collect_one(
    maze: &Maze,
    cells: &[Cell],
    cfg: &CollectConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let noise = Normal::new(0.0f32, cfg.action_noise.max(f32::MIN_POSITIVE))
        .map_err(|e| Error::config(e.to_string()))?;
    let (start_cell, mut target_cell) = loop {
        let s = cells[rng.random_range(0..cells.len())];
        if let Some(t) = pick_target(maze, cells, s, cfg.min_distance, rng) {
            break (s, t);
        }
    };
    let mut state = PointState::at_rest(jittered_center(start_cell, rng));
    let mut target = jittered_center(target_cell, rng);
    let mut ctrl = WaypointController::new(maze, start_cell, target_cell, target);

    let mut traj = Trajectory::default();
    loop {
        let mut a = ctrl.act(&state);
        if cfg.action_noise > 0.0 {
            for v in &mut a {
                *v = (*v + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        traj.states.push(state);
        traj.actions.push(a);
        if traj.len() >= cfg.max_len {
            break;
        }
        state = env_step(maze, &state, a)?;
        let reached = success(&state, &Goal::new(target));
        match cfg.style {
            CollectStyle::Diverse if reached => {
                let a = ctrl.act(&state);
                traj.states.push(state);
                traj.actions.push(a);
                break;
            }
            CollectStyle::Play if reached || rng.random_bool(cfg.retarget_prob) => {
                let here = maze.cell_of(state.pos).expect("stepper keeps points on the grid");
                target_cell = pick_target(maze, cells, here, cfg.min_distance, rng)
                    .or_else(|| pick_target(maze, cells, here, 1, rng))
                    .expect("at least two open cells");
                target = jittered_center(target_cell, rng);
                ctrl = WaypointController::new(maze, here, target_cell, target);
            }
            _ => {}
        }
    }
    Ok(traj)
}

/// Follows cell-center waypoints, braking ahead of turns and the final target.
#[derive(Debug, Clone)]
pub struct WaypointController {
    waypoints: Vec<[f32; 2]>,
    /// For each waypoint, index of the last waypoint on the same straight run.
    run_end: Vec<usize>,
    next: usize,
}

impl WaypointController {
    const CRUISE_SPEED: f32 = 0.9;
    const CORNER_SPEED: f32 = 0.3;
    const BRAKE: f32 = 0.6;
    const ADVANCE_RADIUS: f32 = 0.4;

    pub fn new(maze: &Maze, from: Cell, to: Cell, target: [f32; 2]) -> Self {
        let path = maze.shortest_path(from, to).unwrap_or_else(|| vec![to]);
        let mut waypoints: Vec<[f32; 2]> = path.iter().skip(1).map(|&c| Maze::cell_center(c)).collect();
        match waypoints.last_mut() {
            Some(last) => *last = target,
            None => waypoints.push(target),
        }
        let n = waypoints.len();
        let mut run_end = vec![n - 1; n];
        // waypoint j continues straight when the step into j+1 matches the step into j
        for j in (0..n.saturating_sub(1)).rev() {
            let prev = if j == 0 { Maze::cell_center(from) } else { Maze::cell_center(path[j]) };
            let here = Maze::cell_center(path[j + 1]);
            let after = Maze::cell_center(path[j + 2]);
            let d_in = [here[0] - prev[0], here[1] - prev[1]];
            let d_out = [after[0] - here[0], after[1] - here[1]];
            run_end[j] = if d_in == d_out { run_end[j + 1] } else { j };
        }
        Self {
            waypoints,
            run_end,
            next: 0,
        }
    }

    pub fn act(&mut self, s: &PointState) -> [f32; 2] {
        let last = self.waypoints.len() - 1;
        while self.next < last && dist(s.pos, self.waypoints[self.next]) < Self::ADVANCE_RADIUS {
            self.next += 1;
        }
        let wp = self.waypoints[self.next];
        let end = self.run_end[self.next];
        let to_wp = dist(s.pos, wp);
        let to_turn = to_wp + dist(wp, self.waypoints[end]);
        let floor_speed = if end == last { 0.0 } else { Self::CORNER_SPEED };
        let speed = (floor_speed * floor_speed + 2.0 * Self::BRAKE * to_turn)
            .sqrt()
            .min(Self::CRUISE_SPEED);
        let dir = if to_wp > 1e-6 {
            [(wp[0] - s.pos[0]) / to_wp, (wp[1] - s.pos[1]) / to_wp]
        } else {
            [0.0, 0.0]
        };
        // near the final target never ask for more than one step of travel
        let speed = if end == last { speed.min(to_wp / DT) } else { speed };
        let v_des = [dir[0] * speed, dir[1] * speed];
        [
            ((v_des[0] - s.vel[0]) / DT).clamp(-1.0, 1.0),
            ((v_des[1] - s.vel[1]) / DT).clamp(-1.0, 1.0),
        ]
    }
}

fn dist(a: [f32; 2], b: [f32; 2]) -> f32 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let m = Maze::preset("medium").unwrap();
        let a = scripted_collect(&m, CollectStyle::Diverse, 10, 400, 3).unwrap();
        let b = scripted_collect(&m, CollectStyle::Diverse, 10, 400, 3).unwrap();
        assert_eq!(a, b);
        let c = scripted_collect(&m, CollectStyle::Diverse, 10, 400, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trajectories_replay_exactly() {
        for (name, style) in [
            ("large", CollectStyle::Play),
            ("umaze", CollectStyle::Diverse),
            ("ultra", CollectStyle::Diverse),
        ] {
            let m = Maze::preset(name).unwrap();
            for t in scripted_collect(&m, style, 6, 500, 11).unwrap() {
                assert_eq!(t.states.len(), t.actions.len());
                assert!(t.replays_exactly(&m), "{name}");
                assert!(t.actions.iter().all(|a| a.iter().all(|v| v.abs() <= 1.0)));
            }
        }
    }

    #[test]
    fn play_style_runs_to_max_len() {
        let m = Maze::preset("medium").unwrap();
        for t in scripted_collect(&m, CollectStyle::Play, 4, 300, 0).unwrap() {
            assert_eq!(t.len(), 300);
        }
    }

    #[test]
    fn zero_trajectories_is_a_config_error() {
        let m = Maze::preset("umaze").unwrap();
        assert!(matches!(
            scripted_collect(&m, CollectStyle::Play, 0, 10, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn style_parses() {
        assert_eq!("play".parse::<CollectStyle>().unwrap(), CollectStyle::Play);
        assert!("x".parse::<CollectStyle>().is_err());
    }
}

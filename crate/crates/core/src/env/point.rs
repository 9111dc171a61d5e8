use serde::{Deserialize, Serialize};

use super::maze::Maze;
use crate::error::{Error, Result};

/// Integration step.
pub const DT: f32 = 0.5;
/// Per-axis speed limit in cells per unit time.
pub const V_MAX: f32 = 1.0;
/// Closest a point may come to a wall face it collides with.
pub const WALL_MARGIN: f32 = 0.05;
/// Default success radius around a goal.
pub const GOAL_RADIUS: f32 = 0.5;

/// Point-mass state: position in cells, velocity in cells per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointState {
    pub pos: [f32; 2],
    pub vel: [f32; 2],
}

impl PointState {
    pub const DIM: usize = 4;

    pub fn at_rest(pos: [f32; 2]) -> Self {
        Self {
            pos,
            vel: [0.0, 0.0],
        }
    }

    /// `[x, y, vx, vy]`.
    pub fn to_array(self) -> [f32; 4] {
        [self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn from_slice(v: &[f32]) -> Self {
        Self {
            pos: [v[0], v[1]],
            vel: [v[2], v[3]],
        }
    }
}

/// Target location with a closed success ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub pos: [f32; 2],
    pub radius: f32,
}

impl Goal {
    pub const DIM: usize = 2;

    pub fn new(pos: [f32; 2]) -> Self {
        Self {
            pos,
            radius: GOAL_RADIUS,
        }
    }
}

/// True iff the position is within `goal.radius` of the goal (boundary included).
pub fn success(s: &PointState, goal: &Goal) -> bool {
    let dx = s.pos[0] - goal.pos[0];
    let dy = s.pos[1] - goal.pos[1];
    (dx * dx + dy * dy).sqrt() <= goal.radius
}

/// Advances the point mass one step.
///
/// Actions are clipped to `[-1, 1]`. Then `v' = clip(v + a*DT, ±V_MAX)` and the
/// position moves by `v'*DT`, first along x and then along y. A move that
/// would enter a wall cell stops `WALL_MARGIN` short of the wall face (never
/// backwards) and zeroes the velocity on that axis.
pub fn env_step(maze: &Maze, s: &PointState, action: [f32; 2]) -> Result<PointState> {
    let Some(cell) = maze.cell_of(s.pos).filter(|&c| maze.is_open(c)) else {
        return Err(Error::State(format!(
            "position ({}, {}) is not inside an open cell",
            s.pos[0], s.pos[1]
        )));
    };
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let mut vel = [
        (s.vel[0] + a[0] * DT).clamp(-V_MAX, V_MAX),
        (s.vel[1] + a[1] * DT).clamp(-V_MAX, V_MAX),
    ];
    let (row, col) = cell;

    let mut x = s.pos[0] + vel[0] * DT;
    let x0 = s.pos[0];
    if vel[0] > 0.0 && !maze.is_open((row, col + 1)) {
        let limit = (col + 1) as f32 - WALL_MARGIN;
        if x > limit {
            x = if x0 > limit { x0 } else { limit };
            vel[0] = 0.0;
        }
    } else if vel[0] < 0.0 && (col == 0 || !maze.is_open((row, col - 1))) {
        let limit = col as f32 + WALL_MARGIN;
        if x < limit {
            x = if x0 < limit { x0 } else { limit };
            vel[0] = 0.0;
        }
    }

    let col = x.floor() as usize;
    let y0 = s.pos[1];
    let mut y = y0 + vel[1] * DT;
    if vel[1] > 0.0 && !maze.is_open((row + 1, col)) {
        let limit = (row + 1) as f32 - WALL_MARGIN;
        if y > limit {
            y = if y0 > limit { y0 } else { limit };
            vel[1] = 0.0;
        }
    } else if vel[1] < 0.0 && (row == 0 || !maze.is_open((row - 1, col))) {
        let limit = row as f32 + WALL_MARGIN;
        if y < limit {
            y = if y0 < limit { y0 } else { limit };
            vel[1] = 0.0;
        }
    }
    Ok(PointState { pos: [x, y], vel })
}

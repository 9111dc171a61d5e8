//! Desk-scale 2-D point-maze simulator and scripted data collectors.

mod collect;
mod maze;
mod point;

pub use collect::{
    collect_with, scripted_collect, CollectConfig, CollectStyle, Trajectory, WaypointController,
};
pub use maze::{Cell, Maze, PRESET_NAMES};
pub use point::{env_step, success, Goal, PointState, DT, GOAL_RADIUS, V_MAX, WALL_MARGIN};

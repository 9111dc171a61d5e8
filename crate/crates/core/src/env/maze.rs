use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Grid cell coordinates `(row, col)`. Row grows with `y`, column with `x`.
pub type Cell = (usize, usize);

/// Names accepted by [`Maze::preset`].
pub const PRESET_NAMES: &[&str] = &["corridor", "umaze", "medium", "large", "ultra"];

const UMAZE: &str = "\
#####
#S..#
###.#
#G..#
#####";

const MEDIUM: &str = "\
########
#S.##..#
#..#...#
##...###
#..#...#
#.#..#.#
#...#.G#
########";

const LARGE: &str = "\
############
#S...#.....#
#.##.#.#.#.#
#......#...#
#.####.###.#
#..#.#.....#
##.#.#.#.###
#..#...#..G#
############";

/// Single serpentine: thirteen 37-cell corridors; the designated route is 492 cells.
const ULTRA: &str = "\
#######################################
#S....................................#
#####################################.#
#.....................................#
#.#####################################
#.....................................#
#####################################.#
#.....................................#
#.#####################################
#.....................................#
#####################################.#
#.....................................#
#.#####################################
#.....................................#
#####################################.#
#.....................................#
#.#####################################
#.....................................#
#####################################.#
#.....................................#
#.#####################################
#.....................................#
#####################################.#
#.....................................#
#.#####################################
#....................................G#
#######################################";

/// An immutable point-maze layout of unit cells.
#[derive(Clone, PartialEq, Eq)]
pub struct Maze {
    name: String,
    rows: usize,
    cols: usize,
    open: Vec<bool>,
    start: Option<Cell>,
    goal: Option<Cell>,
}

impl fmt::Debug for Maze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Maze({} {}x{})", self.name, self.rows, self.cols)
    }
}

impl Maze {
    /// Parses an ASCII layout: `#` is a wall, `.` is open. `S` and `G` are open
    /// cells that additionally mark a designated start and goal.
    pub fn from_ascii(layout: &str) -> Result<Self> {
        Self::from_ascii_named("custom", layout)
    }

    pub fn from_ascii_named(name: &str, layout: &str) -> Result<Self> {
        let lines: Vec<&str> = layout
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::Layout("empty layout".into()));
        }
        let cols = lines[0].chars().count();
        let rows = lines.len();
        let mut open = Vec::with_capacity(rows * cols);
        let (mut start, mut goal) = (None, None);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Layout(format!(
                    "ragged layout: row {r} has {} columns, row 0 has {cols}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                let is_open = match ch {
                    '#' => false,
                    '.' => true,
                    'S' => {
                        start = Some((r, c));
                        true
                    }
                    'G' => {
                        goal = Some((r, c));
                        true
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "unexpected character {other:?} at row {r}, column {c}"
                        )))
                    }
                };
                open.push(is_open);
            }
        }
        let maze = Self {
            name: name.to_owned(),
            rows,
            cols,
            open,
            start,
            goal,
        };
        maze.validate()?;
        Ok(maze)
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let border = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if border && self.is_open((r, c)) {
                    return Err(Error::Layout(format!(
                        "layout is not bordered by walls: open cell at row {r}, column {c}"
                    )));
                }
            }
        }
        let cells = self.open_cells();
        let Some(&first) = cells.first() else {
            return Err(Error::Layout("layout has no open cells".into()));
        };
        let dist = self.bfs_distances(first);
        let reached = cells.iter().filter(|&&c| dist[self.index(c)].is_some()).count();
        if reached != cells.len() {
            return Err(Error::Layout(format!(
                "open region is disconnected: {} of {} open cells reachable from {first:?}",
                reached,
                cells.len()
            )));
        }
        Ok(())
    }

    /// Built-in layout by name.
    pub fn preset(name: &str) -> Result<Self> {
        let layout = match name {
            "corridor" => corridor_layout(64),
            "umaze" => UMAZE.to_owned(),
            "medium" => MEDIUM.to_owned(),
            "large" => LARGE.to_owned(),
            "ultra" => ULTRA.to_owned(),
            other => {
                return Err(Error::config(format!(
                    "unknown environment preset `{other}` (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::from_ascii_named(name, &layout)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn designated_start(&self) -> Option<Cell> {
        self.start
    }

    pub fn designated_goal(&self) -> Option<Cell> {
        self.goal
    }

    fn index(&self, (r, c): Cell) -> usize {
        r * self.cols + c
    }

    pub fn is_open(&self, cell: Cell) -> bool {
        cell.0 < self.rows && cell.1 < self.cols && self.open[self.index(cell)]
    }

    /// Cell containing the point `(x, y)`, if it lies on the grid.
    pub fn cell_of(&self, pos: [f32; 2]) -> Option<Cell> {
        let (x, y) = (pos[0].floor(), pos[1].floor());
        if x < 0.0 || y < 0.0 || !x.is_finite() || !y.is_finite() {
            return None;
        }
        let (r, c) = (y as usize, x as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    /// True when the point lies inside an open cell.
    pub fn is_free(&self, pos: [f32; 2]) -> bool {
        self.cell_of(pos).is_some_and(|c| self.is_open(c))
    }

    pub fn cell_center((r, c): Cell) -> [f32; 2] {
        [c as f32 + 0.5, r as f32 + 0.5]
    }

    /// Open cells in row-major order.
    pub fn open_cells(&self) -> Vec<Cell> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&cell| self.is_open(cell))
            .collect()
    }

    fn neighbors(&self, (r, c): Cell) -> impl Iterator<Item = Cell> + '_ {
        // fixed order keeps BFS paths deterministic
        let cand = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        cand.into_iter().filter(move |&n| self.is_open(n))
    }

    /// BFS step distances from `from` to every cell (`None` for walls and unreachable cells).
    pub fn bfs_distances(&self, from: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.rows * self.cols];
        if !self.is_open(from) {
            return dist;
        }
        let mut queue = VecDeque::from([from]);
        dist[self.index(from)] = Some(0);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].unwrap();
            for n in self.neighbors(cell) {
                let i = self.index(n);
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<u32> {
        self.bfs_distances(from)[self.index(to)]
    }

    /// Shortest 4-connected cell path from `from` to `to`, both ends included.
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        if !self.is_open(to) {
            return None;
        }
        // walk downhill on distances measured from the target
        let dist = self.bfs_distances(to);
        let mut cur = from;
        let mut d = dist.get(self.index(from)).copied().flatten()?;
        let mut path = vec![cur];
        while d > 0 {
            cur = self
                .neighbors(cur)
                .find(|&n| dist[self.index(n)] == Some(d - 1))
                .expect("BFS distances are consistent");
            d -= 1;
            path.push(cur);
        }
        Some(path)
    }
}

fn corridor_layout(len: usize) -> String {
    let wall = "#".repeat(len + 2);
    format!("{wall}\n#S{}G#\n{wall}", ".".repeat(len - 2))
}

//! The FourRoom gridworld family.
//!
//! Coordinates are `(x, y)` with `x` the column and `y` the row, `y` growing
//! upward: `(0, 0)` is the bottom-left corner. The four 9x9 rooms are split by
//! the wall row `y = 9` and the wall column `x = 9`, each wall segment holding a
//! single door at its midpoint.
//!
//! Layout files use one character per cell (`.` open, `#` wall, `G` goal). The
//! first line of the file is the top row (`y = height - 1`).

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const FOUR_ROOM_SIZE: i32 = 19;
pub const MAX_EPISODE_STEPS: u32 = 50;
pub const GOAL_REWARD: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub x: i32,
    pub y: i32,
}

impl GridState {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: GridState) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn offset(&self, (dx, dy): (i32, i32)) -> GridState {
        GridState::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
    Stay = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; Action::COUNT] = [
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Stay => (0, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Left => "left",
            Action::Right => "right",
            Action::Up => "up",
            Action::Down => "down",
            Action::Stay => "stay",
        };
        f.write_str(name)
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Action::Left),
            "right" => Ok(Action::Right),
            "up" => Ok(Action::Up),
            "down" => Ok(Action::Down),
            "stay" => Ok(Action::Stay),
            other => Err(Error::InvalidArgument(format!("unknown action `{other}`"))),
        }
    }
}

/// One entry of [`GridSpec::enumerate_states`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub state: GridState,
    pub open: bool,
}

/// Static description of a gridworld: geometry, goal and episode limits.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    width: i32,
    height: i32,
    walls: Vec<bool>,
    goal: GridState,
    doors: Vec<GridState>,
    max_steps: u32,
    goal_reward: f64,
}

impl GridSpec {
    /// FourRoom with the goal at (15, 15).
    pub fn four_room() -> Self {
        Self::four_room_with_goal(GridState::new(15, 15)).expect("built-in layout is valid")
    }

    /// FourRoom2: same walls, goal moved to (2, 18).
    pub fn four_room2() -> Self {
        Self::four_room_with_goal(GridState::new(2, 18)).expect("built-in layout is valid")
    }

    pub fn four_room_with_goal(goal: GridState) -> Result<Self> {
        let size = FOUR_ROOM_SIZE;
        let mid = size / 2;
        let door_offset = mid / 2;
        let doors = [
            GridState::new(door_offset, mid),
            GridState::new(mid + 1 + door_offset, mid),
            GridState::new(mid, door_offset),
            GridState::new(mid, mid + 1 + door_offset),
        ];
        let mut walls = vec![false; (size * size) as usize];
        for i in 0..size {
            walls[(mid * size + i) as usize] = true;
            walls[(i * size + mid) as usize] = true;
        }
        for d in doors {
            walls[(d.y * size + d.x) as usize] = false;
        }
        Self::new(size, size, walls, goal)
    }

    /// Builds a spec from a wall mask in row-major order (`index = y * width + x`).
    pub fn new(width: i32, height: i32, walls: Vec<bool>, goal: GridState) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::Layout(format!("empty grid {width}x{height}")));
        }
        if walls.len() != (width * height) as usize {
            return Err(Error::Layout(format!(
                "wall mask has {} cells, expected {}",
                walls.len(),
                width * height
            )));
        }
        let mut spec = Self {
            width,
            height,
            walls,
            goal,
            doors: Vec::new(),
            max_steps: MAX_EPISODE_STEPS,
            goal_reward: GOAL_REWARD,
        };
        if !spec.contains(goal) || spec.is_wall(goal) {
            return Err(Error::Layout(format!("goal {goal} is not an open cell")));
        }
        spec.doors = spec.find_doors();
        Ok(spec)
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }

    // Doors are open cells squeezed between two walls on opposite sides.
    fn find_doors(&self) -> Vec<GridState> {
        let blocked = |s: GridState| !self.contains(s) || self.is_wall(s);
        self.open_cells()
            .filter(|&s| {
                let horizontal = self.contains(s.offset((-1, 0)))
                    && self.contains(s.offset((1, 0)))
                    && blocked(s.offset((-1, 0)))
                    && blocked(s.offset((1, 0)));
                let vertical = self.contains(s.offset((0, -1)))
                    && self.contains(s.offset((0, 1)))
                    && blocked(s.offset((0, -1)))
                    && blocked(s.offset((0, 1)));
                horizontal || vertical
            })
            .collect()
    }

    pub fn from_layout(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Layout("no rows".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = vec![false; width * height];
        let mut goal = None;
        for (line_no, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Layout(format!(
                    "row {} has {} cells, expected {width}",
                    line_no + 1,
                    row.chars().count()
                )));
            }
            let y = height - 1 - line_no;
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => walls[y * width + x] = true,
                    'G' => {
                        if goal.replace(GridState::new(x as i32, y as i32)).is_some() {
                            return Err(Error::Layout("more than one goal".into()));
                        }
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "unexpected character `{other}` at row {}",
                            line_no + 1
                        )))
                    }
                }
            }
        }
        let goal = goal.ok_or_else(|| Error::Layout("no goal cell".into()))?;
        Self::new(width as i32, height as i32, walls, goal)
    }

    pub fn to_layout(&self) -> String {
        let mut out = String::with_capacity(((self.width + 1) * self.height) as usize);
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let s = GridState::new(x, y);
                out.push(if s == self.goal {
                    'G'
                } else if self.is_wall(s) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn goal(&self) -> GridState {
        self.goal
    }

    pub fn doors(&self) -> &[GridState] {
        &self.doors
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }

    pub fn goal_reward(&self) -> f64 {
        self.goal_reward
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    /// True when both specs have the same geometry, whatever their goals.
    pub fn same_dynamics(&self, other: &GridSpec) -> bool {
        self.width == other.width && self.height == other.height && self.walls == other.walls
    }

    pub fn contains(&self, s: GridState) -> bool {
        s.x >= 0 && s.y >= 0 && s.x < self.width && s.y < self.height
    }

    /// Row-major index; `s` must lie inside the grid.
    pub fn index(&self, s: GridState) -> usize {
        debug_assert!(self.contains(s));
        (s.y * self.width + s.x) as usize
    }

    pub fn state_at(&self, index: usize) -> GridState {
        let i = index as i32;
        GridState::new(i % self.width, i / self.width)
    }

    pub fn is_wall(&self, s: GridState) -> bool {
        self.walls[self.index(s)]
    }

    pub fn is_open(&self, s: GridState) -> bool {
        self.contains(s) && !self.is_wall(s)
    }

    pub fn is_goal(&self, s: GridState) -> bool {
        s == self.goal
    }

    pub fn all_cells(&self) -> impl Iterator<Item = GridState> + '_ {
        (0..self.cell_count()).map(|i| self.state_at(i))
    }

    pub fn open_cells(&self) -> impl Iterator<Item = GridState> + '_ {
        self.all_cells().filter(|&s| !self.is_wall(s))
    }

    /// Open cells other than the goal: the reset distribution's support.
    pub fn start_cells(&self) -> Vec<GridState> {
        self.open_cells().filter(|&s| s != self.goal).collect()
    }

    pub fn enumerate_states(&self) -> Vec<Cell> {
        self.all_cells()
            .map(|state| Cell {
                state,
                open: !self.is_wall(state),
            })
            .collect()
    }

    fn check_open(&self, s: GridState) -> Result<()> {
        if !self.contains(s) {
            return Err(Error::OutOfGrid {
                x: s.x,
                y: s.y,
                width: self.width,
                height: self.height,
            });
        }
        if self.is_wall(s) {
            return Err(Error::WallState { x: s.x, y: s.y });
        }
        Ok(())
    }

    /// Deterministic true dynamics for any in-grid cell: one move in the action's
    /// direction unless the destination is off-grid or a wall.
    pub fn transition(&self, s: GridState, a: Action) -> GridState {
        let next = s.offset(a.delta());
        if self.contains(next) && !self.is_wall(next) {
            next
        } else {
            s
        }
    }

    /// Motion that only respects the outer boundary.
    pub fn free_move(&self, s: GridState, a: Action) -> GridState {
        let next = s.offset(a.delta());
        if self.contains(next) {
            next
        } else {
            s
        }
    }

    /// The known reward function R(s, a): the goal reward when the true
    /// transition from `s` enters the goal. The goal itself is absorbing.
    pub fn reward(&self, s: GridState, a: Action) -> f64 {
        if s != self.goal && self.transition(s, a) == self.goal {
            self.goal_reward
        } else {
            0.0
        }
    }

    /// One environment transition, ignoring the episode clock.
    /// Returns `(next, reward, reached_goal)`.
    pub fn step(&self, s: GridState, a: Action) -> Result<(GridState, f64, bool)> {
        self.check_open(s)?;
        let next = self.transition(s, a);
        let reached = next == self.goal;
        let reward = if reached { self.goal_reward } else { 0.0 };
        Ok((next, reward, reached))
    }

    /// Uniform draw over open non-goal cells.
    pub fn reset(&self, rng: &mut Rng) -> GridState {
        // Rejection sampling keeps the draw allocation-free.
        loop {
            let x = rng.gen_range(0..self.width);
            let y = rng.gen_range(0..self.height);
            let s = GridState::new(x, y);
            if !self.is_wall(s) && s != self.goal {
                return s;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: GridState,
    pub reward: f64,
    /// The goal was reached: a true terminal.
    pub terminal: bool,
    /// The episode clock ran out without reaching the goal.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A gridworld instance with its own episode state.
#[derive(Clone, Debug)]
pub struct GridEnv {
    spec: GridSpec,
    state: GridState,
    steps: u32,
}

impl GridEnv {
    pub fn new(spec: GridSpec, rng: &mut Rng) -> Self {
        let state = spec.reset(rng);
        Self {
            spec,
            state,
            steps: 0,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn reset(&mut self, rng: &mut Rng) -> GridState {
        self.state = self.spec.reset(rng);
        self.steps = 0;
        self.state
    }

    /// Starts an episode from a chosen open cell.
    pub fn reset_to(&mut self, s: GridState) -> Result<()> {
        self.spec.check_open(s)?;
        self.state = s;
        self.steps = 0;
        Ok(())
    }

    pub fn step(&mut self, a: Action) -> Result<StepOutcome> {
        let (next, reward, terminal) = self.spec.step(self.state, a)?;
        self.state = next;
        self.steps += 1;
        Ok(StepOutcome {
            next,
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.spec.max_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::collections::HashSet;

    #[test]
    fn four_room_geometry() {
        let spec = GridSpec::four_room();
        let cells = spec.enumerate_states();
        assert_eq!(cells.len(), 361);
        assert_eq!(cells.iter().filter(|c| c.open).count(), 328);
        let mut doors = spec.doors().to_vec();
        doors.sort();
        let mut expected = vec![
            GridState::new(4, 9),
            GridState::new(14, 9),
            GridState::new(9, 4),
            GridState::new(9, 14),
        ];
        expected.sort();
        assert_eq!(doors, expected);
        assert_eq!(spec.goal(), GridState::new(15, 15));
        assert_eq!(GridSpec::four_room2().goal(), GridState::new(2, 18));
        assert!(spec.same_dynamics(&GridSpec::four_room2()));
    }

    #[test]
    fn enumeration_is_deterministic() {
        let spec = GridSpec::four_room();
        assert_eq!(spec.enumerate_states(), spec.enumerate_states());
    }

    #[test]
    fn boundary_blocks_motion() {
        let spec = GridSpec::four_room();
        let (next, r, done) = spec.step(GridState::new(0, 0), Action::Left).unwrap();
        assert_eq!(next, GridState::new(0, 0));
        assert_eq!(r, 0.0);
        assert!(!done);
    }

    #[test]
    fn internal_wall_blocks_motion() {
        let spec = GridSpec::four_room();
        let (next, r, _) = spec.step(GridState::new(8, 0), Action::Right).unwrap();
        assert_eq!(next, GridState::new(8, 0));
        assert_eq!(r, 0.0);
        // the door lets the agent through
        let (next, _, _) = spec.step(GridState::new(8, 4), Action::Right).unwrap();
        assert_eq!(next, GridState::new(9, 4));
    }

    #[test]
    fn entering_goal_rewards_and_terminates() {
        let spec = GridSpec::four_room();
        let (next, r, done) = spec.step(GridState::new(14, 15), Action::Right).unwrap();
        assert_eq!(next, spec.goal());
        assert_eq!(r, 1.0);
        assert!(done);
        assert_eq!(spec.reward(GridState::new(14, 15), Action::Right), 1.0);
        assert_eq!(spec.reward(spec.goal(), Action::Stay), 0.0);
    }

    #[test]
    fn wall_states_are_rejected() {
        let spec = GridSpec::four_room();
        assert!(matches!(
            spec.step(GridState::new(9, 0), Action::Left),
            Err(Error::WallState { x: 9, y: 0 })
        ));
        assert!(matches!(
            spec.step(GridState::new(-1, 0), Action::Left),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn reset_is_deterministic_and_covers_every_start_cell() {
        let spec = GridSpec::four_room();
        let a = spec.reset(&mut stream(3, Stream::EnvReset));
        let b = spec.reset(&mut stream(3, Stream::EnvReset));
        assert_eq!(a, b);

        let mut rng = stream(11, Stream::EnvReset);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let s = spec.reset(&mut rng);
            assert!(spec.is_open(s));
            assert_ne!(s, spec.goal());
            seen.insert(s);
        }
        let expected: HashSet<_> = spec.start_cells().into_iter().collect();
        assert_eq!(seen, expected);
        assert_eq!(expected.len(), 327);
    }

    #[test]
    fn episode_clock_truncates_at_fifty_steps() {
        let spec = GridSpec::four_room();
        let mut env = GridEnv::new(spec, &mut stream(0, Stream::EnvReset));
        env.reset_to(GridState::new(0, 0)).unwrap();
        for i in 1..=MAX_EPISODE_STEPS {
            let out = env.step(Action::Left).unwrap();
            assert!(!out.terminal);
            assert_eq!(out.truncated, i == MAX_EPISODE_STEPS);
        }
    }

    #[test]
    fn layout_round_trip() {
        let spec = GridSpec::four_room2();
        let text = spec.to_layout();
        assert_eq!(text.lines().count(), 19);
        assert!(text.lines().next().unwrap().starts_with("..G"));
        let parsed = GridSpec::from_layout(&text).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn layout_errors() {
        assert!(GridSpec::from_layout("...\n.#.\n").is_err());
        assert!(GridSpec::from_layout("..G\n.G.\n").is_err());
        assert!(GridSpec::from_layout("..G\n..\n").is_err());
        assert!(GridSpec::from_layout("..G\n.x.\n").is_err());
    }

    #[test]
    fn no_transition_enters_a_wall_or_leaves_the_grid() {
        let spec = GridSpec::four_room();
        for s in spec.open_cells() {
            for a in Action::ALL {
                let (next, r, _) = spec.step(s, a).unwrap();
                assert!(spec.is_open(next));
                assert!(r == 0.0 || r == 1.0);
                assert_eq!(spec.step(s, a).unwrap().0, next);
            }
        }
    }
}

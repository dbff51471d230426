//! Desk-scale benchmark environments.

use super::{MdpBuilder, TabularMdp};
use crate::error::{Error, Result};

/// Chain action that advances one state.
pub const ACTION_RIGHT: usize = 0;
/// Chain action that stays in place.
pub const ACTION_LEFT: usize = 1;

/// Grid moves in action order: up, right, down, left.
const MOVES: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// `n`-state chain with terminal `n - 1`. Right advances and pays 1 on
/// entering the terminal; left stays put with reward 0. Starts in state 0.
pub fn make_chain(n: usize, gamma: f64) -> TabularMdp {
    assert!(n >= 2, "a chain needs at least two states");
    let mut b = MdpBuilder::new(n, 2, gamma);
    for s in 0..n - 1 {
        let reward = if s + 1 == n - 1 { 1.0 } else { 0.0 };
        b.transition(s, ACTION_RIGHT, s + 1, 1.0, reward);
        b.transition(s, ACTION_LEFT, s, 1.0, 0.0);
    }
    b.terminal(n - 1).initial(0, 1.0);
    b.build().expect("chain construction is valid")
}

/// One decision with two equally likely terminal outcomes worth 1 and 3.
pub fn split_mdp() -> TabularMdp {
    let mut b = MdpBuilder::new(3, 1, 0.9);
    b.transition(0, 0, 1, 0.5, 1.0)
        .transition(0, 0, 2, 0.5, 3.0)
        .terminal(1)
        .terminal(2)
        .initial(0, 1.0);
    b.build().expect("split construction is valid")
}

struct Grid {
    width: usize,
    height: usize,
    index: Vec<Option<usize>>,
}

impl Grid {
    fn new(width: usize, height: usize, walls: &[(usize, usize)]) -> Result<(Self, usize)> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidLayout("grid must be at least 1x1".into()));
        }
        let mut blocked = vec![false; width * height];
        for &(x, y) in walls {
            if x >= width || y >= height {
                return Err(Error::InvalidLayout(format!("wall ({x}, {y}) outside the grid")));
            }
            blocked[y * width + x] = true;
        }
        let mut index = vec![None; width * height];
        let mut n = 0;
        for (cell, slot) in index.iter_mut().enumerate() {
            if !blocked[cell] {
                *slot = Some(n);
                n += 1;
            }
        }
        Ok((Self { width, height, index }, n))
    }

    fn state(&self, (x, y): (usize, usize)) -> Option<usize> {
        if x < self.width && y < self.height {
            self.index[y * self.width + x]
        } else {
            None
        }
    }

    fn cells(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| self.state((x, y)).map(|s| ((x, y), s)))
        })
    }

    /// Cell reached by moving `dir` from `cell`; blocked moves stay in place.
    fn moved(&self, (x, y): (usize, usize), dir: usize) -> usize {
        let (dx, dy) = MOVES[dir];
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        let here = self.state((x, y)).expect("cell is open");
        if nx < 0 || ny < 0 {
            return here;
        }
        self.state((nx as usize, ny as usize)).unwrap_or(here)
    }
}

/// Four-action gridworld starting in cell (0, 0). With probability `slip`
/// the agent moves in a uniformly chosen perpendicular direction instead.
/// States are the open cells in row-major order; the goal is terminal.
#[allow(clippy::too_many_arguments)]
pub fn make_gridworld(
    width: usize,
    height: usize,
    walls: &[(usize, usize)],
    goal: (usize, usize),
    slip: f64,
    step_reward: f64,
    goal_reward: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidLayout(format!("slip {slip} outside [0, 1)")));
    }
    let (grid, n) = Grid::new(width, height, walls)?;
    let goal_state = grid
        .state(goal)
        .ok_or_else(|| Error::InvalidLayout(format!("goal {goal:?} is a wall or outside the grid")))?;
    let start = grid
        .state((0, 0))
        .ok_or_else(|| Error::InvalidLayout("start cell (0, 0) is a wall".into()))?;
    if start == goal_state {
        return Err(Error::InvalidLayout("start cell coincides with the goal".into()));
    }
    let mut b = MdpBuilder::new(n, 4, gamma);
    for (cell, s) in grid.cells() {
        if s == goal_state {
            continue;
        }
        for a in 0..4 {
            let mut outcomes = vec![(grid.moved(cell, a), 1.0 - slip)];
            if slip > 0.0 {
                outcomes.push((grid.moved(cell, (a + 1) % 4), slip / 2.0));
                outcomes.push((grid.moved(cell, (a + 3) % 4), slip / 2.0));
            }
            for (next, p) in outcomes {
                let r = if next == goal_state { goal_reward } else { step_reward };
                b.transition(s, a, next, p, r);
            }
        }
    }
    b.terminal(goal_state).initial(start, 1.0);
    // Merging perpendicular outcomes that land in the same cell is expected here.
    let level = log::max_level();
    log::set_max_level(log::LevelFilter::Error);
    let built = b.build();
    log::set_max_level(level);
    built
}

/// Small stochastic-shortest-path track: every move costs 1, a move succeeds
/// with probability 0.8 and otherwise skids in place. Undiscounted.
///
/// ```text
/// S . . . .
/// # # # . #
/// G . . . .
/// ```
pub fn make_ssp_racetrack_small() -> TabularMdp {
    let walls = [(0, 1), (1, 1), (2, 1), (4, 1)];
    let (grid, n) = Grid::new(5, 3, &walls).expect("static layout");
    let goal = grid.state((0, 2)).expect("open goal");
    let start = grid.state((0, 0)).expect("open start");
    let mut b = MdpBuilder::new(n, 4, 1.0);
    for (cell, s) in grid.cells() {
        if s == goal {
            continue;
        }
        for a in 0..4 {
            b.transition(s, a, grid.moved(cell, a), 0.8, -1.0);
            b.transition(s, a, s, 0.2, -1.0);
        }
    }
    b.terminal(goal).initial(start, 1.0);
    let level = log::max_level();
    log::set_max_level(log::LevelFilter::Error);
    let built = b.build();
    log::set_max_level(level);
    built.expect("racetrack construction is valid")
}

/// Two-level stochastic decision tree (undiscounted). Action 0 at the root is
/// optimal (0.75 vs 0.5) although action 1 pays more immediately and looks
/// better under uniformly random continuations.
pub fn make_decision_tree() -> TabularMdp {
    let (lo, hi) = (4, 5);
    let mut b = MdpBuilder::new(6, 2, 1.0);
    b.transition(0, 0, 1, 0.5, 0.0)
        .transition(0, 0, 2, 0.5, 0.0)
        .transition(0, 1, 3, 1.0, 0.3)
        .transition(1, 0, lo, 1.0, 1.0)
        .transition(1, 1, lo, 0.5, 0.0)
        .transition(1, 1, hi, 0.5, 0.4)
        .transition(2, 0, lo, 1.0, 0.0)
        .transition(2, 1, lo, 0.8, 0.6)
        .transition(2, 1, hi, 0.2, 0.1)
        .transition(3, 0, lo, 1.0, 0.2)
        .transition(3, 1, lo, 0.5, 0.4)
        .transition(3, 1, hi, 0.5, 0.0)
        .terminal(lo)
        .terminal(hi)
        .initial(0, 1.0);
    b.build().expect("tree construction is valid")
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> &'static [&'static str] {
    &["chain3", "chain10", "split", "grid2", "grid5", "ssp_small", "tree2"]
}

/// Built-in environment by name.
pub fn builtin(name: &str) -> Option<TabularMdp> {
    let mdp = match name {
        "chain3" => make_chain(3, 0.9),
        "chain10" => make_chain(10, 0.9),
        "split" => split_mdp(),
        "grid2" => make_gridworld(2, 2, &[], (1, 1), 0.0, 0.0, 1.0, 0.95).ok()?,
        "grid5" => make_gridworld(5, 5, &[], (4, 4), 0.1, 0.0, 1.0, 0.95).ok()?,
        "ssp_small" => make_ssp_racetrack_small(),
        "tree2" => make_decision_tree(),
        _ => return None,
    };
    Some(mdp)
}

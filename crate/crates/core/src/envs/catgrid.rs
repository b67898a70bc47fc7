//! Walled grid world observed only through categorical tile tokens.
//!
//! The agent starts in the top-left interior cell facing east and must reach
//! the goal in the bottom-right interior cell. It sees a 7×7 egocentric
//! window, its heading, and a fixed mission string.

use super::{discrete_action, Environment, StepResult};
use crate::ensemble::ActionHead;
use crate::error::{Error, Result};
use crate::features::{Direction, FeatureSchema, GridView, Observation, Tile, TileColor, TileType, GRID_VIEW};
use crate::policy::Action;

pub const DEFAULT_SIZE: usize = 8;
pub const MISSION: &str = "get to the green goal square";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Left = 0,
    Right = 1,
    Forward = 2,
    Pickup = 3,
}

const UNSEEN: Tile = Tile {
    kind: TileType::Unseen,
    color: TileColor::Black,
    state: 0,
};

#[derive(Debug, Clone)]
pub struct CatGrid {
    size: usize,
    tiles: Vec<Tile>,
    pos: (usize, usize),
    dir: Direction,
    steps: usize,
    max_steps: usize,
    needs_reset: bool,
}

impl CatGrid {
    /// The default 8×8 layout. The layout is fixed, so the seed is unused.
    pub fn new(_seed: u64) -> Self {
        Self::with_size(DEFAULT_SIZE)
    }

    pub fn with_size(size: usize) -> Self {
        assert!(size >= 3, "grid needs an interior");
        let mut tiles = vec![Tile::EMPTY; size * size];
        for i in 0..size {
            tiles[i] = Tile::WALL;
            tiles[(size - 1) * size + i] = Tile::WALL;
            tiles[i * size] = Tile::WALL;
            tiles[i * size + size - 1] = Tile::WALL;
        }
        tiles[(size - 2) * size + (size - 2)] = Tile::GOAL;
        Self {
            size,
            tiles,
            pos: (1, 1),
            dir: Direction::Right,
            steps: 0,
            max_steps: 4 * size * size,
            needs_reset: true,
        }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn direction(&self) -> Direction {
        self.dir
    }

    /// Starts an episode with the agent at `pos` facing `dir`.
    pub fn reset_to(&mut self, pos: (usize, usize), dir: Direction) -> Observation {
        assert!(self.tile(pos.0 as i64, pos.1 as i64) == Tile::EMPTY, "agent must start on an empty cell");
        self.pos = pos;
        self.dir = dir;
        self.steps = 0;
        self.needs_reset = false;
        Observation::Grid(self.view())
    }

    /// Success reward for finishing after `steps` steps.
    pub fn success_reward(&self, steps: usize) -> f64 {
        1.0 - 0.9 * steps as f64 / self.max_steps as f64
    }

    fn tile(&self, x: i64, y: i64) -> Tile {
        let n = self.size as i64;
        if (0..n).contains(&x) && (0..n).contains(&y) {
            self.tiles[y as usize * self.size + x as usize]
        } else {
            UNSEEN
        }
    }

    fn view(&self) -> GridView {
        let (fx, fy) = self.dir.delta();
        let (rx, ry) = self.dir.turn_right().delta();
        let (ax, ay) = (self.pos.0 as i64, self.pos.1 as i64);
        let mut cells = [[UNSEEN; GRID_VIEW]; GRID_VIEW];
        let back = (GRID_VIEW - 1) as i64;
        let mid = (GRID_VIEW / 2) as i64;
        for (row, line) in cells.iter_mut().enumerate() {
            for (col, cell) in line.iter_mut().enumerate() {
                let ahead = back - row as i64;
                let side = col as i64 - mid;
                *cell = self.tile(ax + fx * ahead + rx * side, ay + fy * ahead + ry * side);
            }
        }
        GridView {
            cells,
            direction: self.dir,
            mission: MISSION.to_owned(),
        }
    }
}

impl Environment for CatGrid {
    fn schema(&self) -> FeatureSchema {
        FeatureSchema::grid()
    }

    fn action_head(&self) -> ActionHead {
        ActionHead::Discrete { n_actions: 4 }
    }

    fn reset(&mut self) -> Observation {
        self.reset_to((1, 1), Direction::Right)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::StepAfterDone);
        }
        let a = discrete_action(action, 4)?;
        self.steps += 1;
        let mut reward = 0.0;
        let mut terminated = false;
        match a {
            0 => self.dir = self.dir.turn_left(),
            1 => self.dir = self.dir.turn_right(),
            2 => {
                let (dx, dy) = self.dir.delta();
                let (nx, ny) = (self.pos.0 as i64 + dx, self.pos.1 as i64 + dy);
                match self.tile(nx, ny).kind {
                    TileType::Empty => self.pos = (nx as usize, ny as usize),
                    TileType::Goal => {
                        self.pos = (nx as usize, ny as usize);
                        reward = self.success_reward(self.steps);
                        terminated = true;
                    }
                    TileType::Wall | TileType::Unseen => {}
                }
            }
            // Nothing on this map can be picked up.
            _ => {}
        }
        let truncated = !terminated && self.steps >= self.max_steps;
        let done = terminated || truncated;
        self.needs_reset = done;
        Ok(StepResult {
            observation: Observation::Grid(self.view()),
            reward,
            done,
            truncated,
        })
    }
}

//! Built-in environments and the vectorized stepper.

mod cartpole;
mod catgrid;
mod pendulum;
mod vec_env;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cartpole::CartPole;
pub use catgrid::{CatGrid, GridAction};
pub use pendulum::Pendulum;
pub use vec_env::{VecEnv, VecStep};

use crate::ensemble::ActionHead;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Observation};
use crate::policy::Action;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// The episode is over, by termination or by the time limit.
    pub done: bool,
    /// The episode hit its time limit rather than a terminal state.
    pub truncated: bool,
}

impl StepResult {
    pub fn terminated(&self) -> bool {
        self.done && !self.truncated
    }
}

pub trait Environment: Send {
    /// Fresh schema describing this environment's observations.
    fn schema(&self) -> FeatureSchema;

    fn action_head(&self) -> ActionHead;

    fn reset(&mut self) -> Observation;

    fn step(&mut self, action: &Action) -> Result<StepResult>;
}

/// Builds a seeded environment instance.
pub type EnvFactory = dyn Fn(u64) -> Box<dyn Environment> + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    CartPole,
    CatGrid,
    Pendulum,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::CatGrid => "catgrid",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn make(self, seed: u64) -> Box<dyn Environment> {
        match self {
            EnvKind::CartPole => Box::new(CartPole::new(seed)),
            EnvKind::CatGrid => Box::new(CatGrid::new(seed)),
            EnvKind::Pendulum => Box::new(Pendulum::new(seed)),
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvKind::CartPole),
            "catgrid" => Ok(EnvKind::CatGrid),
            "pendulum" => Ok(EnvKind::Pendulum),
            other => Err(Error::UnknownEnv(other.to_owned())),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn discrete_action(action: &Action, n: usize) -> Result<usize> {
    match action {
        Action::Discrete(a) if *a < n => Ok(*a),
        other => Err(Error::InvalidAction {
            action: format!("{other:?}"),
            detail: format!("{n} discrete actions"),
        }),
    }
}

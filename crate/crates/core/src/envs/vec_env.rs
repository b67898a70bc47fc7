use super::{EnvFactory, Environment};
use crate::ensemble::ActionHead;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Observation};
use crate::policy::Action;

/// Result of stepping one member of a [`VecEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    /// Next observation; the first observation of a new episode when `done`.
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    /// Final observation of the finished episode, when `done`.
    pub terminal_observation: Option<Observation>,
}

/// `n` environments seeded `seed, seed + 1, ...`, auto-reset on episode end.
pub struct VecEnv {
    envs: Vec<Box<dyn Environment>>,
    observations: Vec<Observation>,
}

impl VecEnv {
    pub fn new(factory: &EnvFactory, n: usize, seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidConfig("vectorized env needs at least one instance".into()));
        }
        let mut envs: Vec<Box<dyn Environment>> = (0..n as u64).map(|i| factory(seed.wrapping_add(i))).collect();
        let observations = envs.iter_mut().map(|e| e.reset()).collect();
        Ok(Self { envs, observations })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn schema(&self) -> FeatureSchema {
        self.envs[0].schema()
    }

    pub fn action_head(&self) -> ActionHead {
        self.envs[0].action_head()
    }

    /// Current observation of every member, in env-index order.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Steps every member with its action; results are in env-index order.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<VecStep>> {
        if actions.len() != self.envs.len() {
            return Err(Error::LengthMismatch(format!(
                "{} actions for {} environments",
                actions.len(),
                self.envs.len()
            )));
        }
        let mut out = Vec::with_capacity(self.envs.len());
        for ((env, obs), action) in self.envs.iter_mut().zip(&mut self.observations).zip(actions) {
            let r = env.step(action)?;
            let (observation, terminal_observation) = if r.done {
                (env.reset(), Some(r.observation))
            } else {
                (r.observation, None)
            };
            *obs = observation.clone();
            out.push(VecStep {
                observation,
                reward: r.reward,
                done: r.done,
                truncated: r.truncated,
                terminal_observation,
            });
        }
        Ok(out)
    }
}

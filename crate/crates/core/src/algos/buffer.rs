//! Experience storage: the on-policy rollout buffer and the AWR replay ring.

use std::collections::VecDeque;

use super::gae::compute_gae;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::policy::Action;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: FeatureVector,
    pub action: Action,
    /// Reward, including the bootstrapped tail of a time-limit truncation.
    pub reward: f64,
    /// Episode ended after this step (no bootstrap from the next state).
    pub done: bool,
    pub log_prob_old: f64,
    pub value_old: f64,
}

/// One rollout of `n_steps` steps from `n_envs` environments, stored
/// step-major (`index = step * n_envs + env`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    n_steps: usize,
    n_envs: usize,
    transitions: Vec<Transition>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_steps: usize, n_envs: usize) -> Self {
        Self {
            n_steps,
            n_envs,
            transitions: Vec::with_capacity(n_steps * n_envs),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() == self.n_steps * self.n_envs
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if self.is_full() {
            return Err(Error::LengthMismatch("rollout buffer is full".into()));
        }
        self.transitions.push(t);
        self.advantages.clear();
        self.returns.clear();
        Ok(())
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Runs GAE per environment using each transition's `value_old`.
    pub fn compute_advantages(&mut self, last_values: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if !self.is_full() {
            return Err(Error::LengthMismatch(format!(
                "rollout holds {} of {} transitions",
                self.len(),
                self.n_steps * self.n_envs
            )));
        }
        if last_values.len() != self.n_envs {
            return Err(Error::LengthMismatch(format!(
                "{} bootstrap values for {} environments",
                last_values.len(),
                self.n_envs
            )));
        }
        let n = self.transitions.len();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        for (e, &last) in last_values.iter().enumerate() {
            let column: Vec<&Transition> = self.transitions.iter().skip(e).step_by(self.n_envs).collect();
            let rewards: Vec<f64> = column.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = column.iter().map(|t| t.value_old).collect();
            let dones: Vec<bool> = column.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, last, gamma, lambda)?;
            for (step, (a, g)) in adv.into_iter().zip(ret).enumerate() {
                let i = step * self.n_envs + e;
                self.advantages[i] = a;
                self.returns[i] = g;
            }
        }
        Ok(())
    }

    /// Advantages A; empty until [`Self::compute_advantages`] has run.
    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    /// Returns G; empty until [`Self::compute_advantages`] has run.
    pub fn returns(&self) -> &[f64] {
        &self.returns
    }
}

#[derive(Debug, Clone)]
struct Stored {
    transition: Transition,
    env: usize,
    /// Current ensemble output for the state.
    theta: Vec<f64>,
}

/// Fixed-capacity FIFO replay buffer. Each entry keeps the current ensemble
/// output for its state so advantages can be recomputed against the current
/// critic without re-running the whole ensemble.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    n_envs: usize,
    entries: VecDeque<Stored>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_envs: usize) -> Self {
        Self {
            capacity,
            n_envs,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a transition from `env`, evicting the oldest entry when full.
    pub fn push(&mut self, transition: Transition, env: usize, theta: Vec<f64>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(Stored { transition, env, theta });
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn transition(&self, i: usize) -> &Transition {
        &self.entries[i].transition
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.entries[i].theta
    }

    /// Applies `f(state, theta)` to every cached output.
    pub fn update_thetas(&mut self, mut f: impl FnMut(&[f64], &mut [f64])) {
        for s in &mut self.entries {
            f(s.transition.state.values(), &mut s.theta);
        }
    }

    /// TD(λ) advantages and returns against the cached critic outputs.
    /// `tail_values[e]` bootstraps environment `e`'s newest unfinished step.
    pub fn recompute(&mut self, value_dim: usize, tail_values: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if tail_values.len() != self.n_envs {
            return Err(Error::LengthMismatch(format!(
                "{} bootstrap values for {} environments",
                tail_values.len(),
                self.n_envs
            )));
        }
        let n = self.entries.len();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        let mut next_value = tail_values.to_vec();
        let mut next_adv = vec![0.0; self.n_envs];
        for i in (0..n).rev() {
            let s = &self.entries[i];
            let e = s.env;
            let value = s.theta[value_dim];
            let live = if s.transition.done { 0.0 } else { 1.0 };
            let delta = s.transition.reward + gamma * live * next_value[e] - value;
            let adv = delta + gamma * lambda * live * next_adv[e];
            self.advantages[i] = adv;
            self.returns[i] = adv + value;
            next_value[e] = value;
            next_adv[e] = adv;
        }
        Ok(())
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }
}

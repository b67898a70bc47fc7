//! Pole balanced on a cart, with the classic benchmark constants and Euler
//! integration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{discrete_action, Environment, StepResult};
use crate::ensemble::ActionHead;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Observation};
use crate::policy::Action;

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
/// 12 degrees.
pub const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const MAX_STEPS: usize = 500;

#[derive(Debug, Clone)]
pub struct CartPole {
    /// x, ẋ, angle, angular velocity.
    state: [f64; 4],
    steps: usize,
    needs_reset: bool,
    rng: ChaCha8Rng,
}

impl CartPole {
    pub fn new(seed: u64) -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            needs_reset: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: [f64; 4]) -> Observation {
        self.state = state;
        self.steps = 0;
        self.needs_reset = false;
        Observation::Numeric(state.to_vec())
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }
}

impl Environment for CartPole {
    fn schema(&self) -> FeatureSchema {
        let mut schema = FeatureSchema::new();
        for name in ["cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"] {
            schema.push(name, crate::features::FeatureKind::Numerical);
        }
        schema
    }

    fn action_head(&self) -> ActionHead {
        ActionHead::Discrete { n_actions: 2 }
    }

    fn reset(&mut self) -> Observation {
        let state = [(); 4].map(|_| self.rng.random_range(-0.05..0.05));
        self.reset_to(state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::StepAfterDone);
        }
        let a = discrete_action(action, 2)?;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if a == 1 { FORCE } else { -FORCE };
        let total_mass = CART_MASS + POLE_MASS;
        let pole_mass_length = POLE_MASS * HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();

        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

        self.state = [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ];
        self.steps += 1;

        let [x, _, theta, _] = self.state;
        let terminated = !(-X_LIMIT..=X_LIMIT).contains(&x) || !(-ANGLE_LIMIT..=ANGLE_LIMIT).contains(&theta);
        let truncated = !terminated && self.steps >= MAX_STEPS;
        let done = terminated || truncated;
        self.needs_reset = done;
        Ok(StepResult {
            observation: Observation::Numeric(self.state.to_vec()),
            reward: 1.0,
            done,
            truncated,
        })
    }
}

//! Torque-limited pendulum swing-up.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, StepResult};
use crate::ensemble::ActionHead;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSchema, Observation};
use crate::policy::Action;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_STEPS: usize = 200;

/// Wraps an angle into [-π, π).
pub fn normalize_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    /// Angle from upright, angular velocity.
    theta: f64,
    theta_dot: f64,
    steps: usize,
    needs_reset: bool,
    rng: ChaCha8Rng,
}

impl Pendulum {
    pub fn new(seed: u64) -> Self {
        Self {
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            needs_reset: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Observation {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.needs_reset = false;
        self.observe()
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observe(&self) -> Observation {
        Observation::Numeric(vec![self.theta.cos(), self.theta.sin(), self.theta_dot])
    }
}

impl Environment for Pendulum {
    fn schema(&self) -> FeatureSchema {
        let mut schema = FeatureSchema::new();
        for name in ["cos_theta", "sin_theta", "theta_dot"] {
            schema.push(name, FeatureKind::Numerical);
        }
        schema
    }

    fn action_head(&self) -> ActionHead {
        ActionHead::Gaussian { action_dim: 1 }
    }

    fn reset(&mut self) -> Observation {
        let theta = self.rng.random_range(-PI..PI);
        let theta_dot = self.rng.random_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::StepAfterDone);
        }
        let torque = match action {
            Action::Continuous(a) if a.len() == 1 && !a[0].is_nan() => a[0].clamp(-MAX_TORQUE, MAX_TORQUE),
            other => {
                return Err(Error::InvalidAction {
                    action: format!("{other:?}"),
                    detail: "1-dim continuous torque".into(),
                })
            }
        };
        let angle = normalize_angle(self.theta);
        let cost = angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque;

        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * torque;
        self.theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        self.steps += 1;

        let truncated = self.steps >= MAX_STEPS;
        self.needs_reset = truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward: -cost,
            done: truncated,
            truncated,
        })
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::TreeFitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    A2c,
    Ppo,
    Awr,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::A2c => "a2c",
            Algo::Ppo => "ppo",
            Algo::Awr => "awr",
        })
    }
}

/// A learning rate that is either constant or decays linearly to zero over
/// the step budget. Written as `0.01` or `"lin_0.01"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateRepr", into = "RateRepr")]
pub enum LrSchedule {
    Constant(f64),
    Linear(f64),
}

impl LrSchedule {
    pub fn initial(self) -> f64 {
        match self {
            LrSchedule::Constant(lr) | LrSchedule::Linear(lr) => lr,
        }
    }

    /// Multiplier on the initial rate at training progress `p` in [0, 1].
    pub fn factor(self, progress: f64) -> f64 {
        match self {
            LrSchedule::Constant(_) => 1.0,
            LrSchedule::Linear(_) => (1.0 - progress).clamp(0.0, 1.0),
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrSchedule::Constant(lr) => write!(f, "{lr}"),
            LrSchedule::Linear(lr) => write!(f, "lin_{lr}"),
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("cannot parse learning rate {s:?}"));
        match s.strip_prefix("lin_") {
            Some(rest) => rest.parse().map(LrSchedule::Linear).map_err(|_| bad()),
            None => s.parse().map(LrSchedule::Constant).map_err(|_| bad()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RateRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<RateRepr> for LrSchedule {
    type Error = Error;

    fn try_from(r: RateRepr) -> Result<Self> {
        match r {
            RateRepr::Number(lr) => Ok(LrSchedule::Constant(lr)),
            RateRepr::Text(s) => s.parse(),
        }
    }
}

impl From<LrSchedule> for RateRepr {
    fn from(s: LrSchedule) -> Self {
        match s {
            LrSchedule::Constant(lr) => RateRepr::Number(lr),
            LrSchedule::Linear(_) => RateRepr::Text(s.to_string()),
        }
    }
}

/// Algorithm hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub algo: Algo,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// PPO ratio clip ε.
    pub clip_range: f64,
    pub ent_coef: f64,
    /// AWR temperature β.
    pub beta: f64,
    pub n_steps: usize,
    pub n_envs: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    /// Boosting iterations K (trees added in shared mode); unbounded when
    /// absent, leaving the step budget to end training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_iterations: Option<u64>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_log_std: LrSchedule,
    pub log_std_init: f64,
    /// Batch L2-norm limit on policy gradients; 0 disables.
    pub grad_clip_policy: f64,
    /// Batch L2-norm limit on value gradients; 0 disables.
    pub grad_clip_value: f64,
    pub normalize_advantage: bool,
    pub awr_weight_max: f64,
    pub awr_train_freq: usize,
    pub awr_gradient_steps: usize,
    pub awr_buffer_size: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ppo,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            ent_coef: 0.0,
            beta: 0.05,
            n_steps: 128,
            n_envs: 8,
            batch_size: 64,
            n_epochs: 1,
            total_iterations: None,
            lr_actor: 0.03,
            lr_critic: 0.01,
            lr_log_std: LrSchedule::Constant(0.0017),
            log_std_init: crate::ensemble::LOG_STD_INIT,
            grad_clip_policy: 0.0,
            grad_clip_value: 0.0,
            normalize_advantage: true,
            awr_weight_max: 20.0,
            awr_train_freq: 2000,
            awr_gradient_steps: 150,
            awr_buffer_size: 50_000,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip_range > 0.0) {
            return fail(format!("clip_range must be > 0, got {}", self.clip_range));
        }
        if !(self.beta > 0.0) {
            return fail(format!("beta must be > 0, got {}", self.beta));
        }
        for (name, lr) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_log_std", self.lr_log_std.initial()),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return fail(format!("{name} must be > 0, got {lr}"));
            }
        }
        for (name, v) in [
            ("n_steps", self.n_steps),
            ("n_envs", self.n_envs),
            ("batch_size", self.batch_size),
            ("n_epochs", self.n_epochs),
            ("awr_train_freq", self.awr_train_freq),
            ("awr_gradient_steps", self.awr_gradient_steps),
            ("awr_buffer_size", self.awr_buffer_size),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if !(self.ent_coef >= 0.0) || !self.ent_coef.is_finite() {
            return fail(format!("ent_coef must be >= 0, got {}", self.ent_coef));
        }
        if !(self.grad_clip_policy >= 0.0) || !(self.grad_clip_value >= 0.0) {
            return fail("gradient clip limits must be >= 0".into());
        }
        if !(self.awr_weight_max > 0.0) {
            return fail(format!("awr_weight_max must be > 0, got {}", self.awr_weight_max));
        }
        if !self.log_std_init.is_finite() {
            return fail("log_std_init must be finite".into());
        }
        Ok(())
    }

    /// Trees fit per on-policy rollout.
    pub fn updates_per_rollout(&self) -> usize {
        let rollout = self.n_steps * self.n_envs;
        self.n_epochs * rollout.div_ceil(self.batch_size)
    }
}

/// Tree-shape hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub num_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 4,
            min_samples_leaf: 1,
            num_bins: 256,
        }
    }
}

impl TreeParams {
    pub fn fit_config(&self, output_dim: usize) -> TreeFitConfig {
        TreeFitConfig {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            num_bins: self.num_bins,
            output_dim,
        }
    }
}

/// Everything one training run needs besides the environment and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algo: AlgoConfig,
    pub tree: TreeParams,
    pub total_timesteps: u64,
    /// One tree over all output dims (true) or separate actor and critic
    /// ensembles (false).
    pub shared_ac: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.algo.validate()?;
        self.tree.fit_config(1).validate()
    }
}

//! Gradient-boosted tree ensembles as actor-critic function approximators.
//!
//! A single ensemble of multi-output regression trees parameterizes both the
//! policy and the value function. Each boosting iteration fits one tree to
//! per-sample policy/value gradients (A2C, PPO or AWR) and appends it, with
//! separate learning rates for the policy, log-std and value outputs.

pub mod algos;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod features;
pub mod policy;
pub mod tree;

pub use ensemble::{ActionHead, OutputLayout, SharedACEnsemble};
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureSchema, FeatureVector};
pub use policy::{Action, Distribution, PolicyParams};
pub use tree::{fit_tree, DecisionTree, TreeFitConfig};

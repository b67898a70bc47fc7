//! Command-line front end for training, evaluating and inspecting
//! gradient-boosted actor-critic models.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_eval, cmd_inspect, cmd_train, evaluate, load_model, save_model, EvalReport, TrainSummary};
pub use config::{preset, RunConfig, PRESETS};
pub use error::{CliError, Failure};

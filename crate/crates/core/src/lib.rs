//! Next-CDM forecasting for satellite conjunction events.
//!
//! A stacked LSTM reads the CDMs of an event so far and predicts the next
//! one. Dropout stays active at inference, so repeated forward passes give a
//! sample distribution rather than a point value ([`inference::predict_next`],
//! [`inference::rollout`]). Everything from CSV cleaning to the backward pass
//! is in this crate; see `examples/` for one program per capability.
//!
//! All randomness comes from explicit `u64` seeds. Given the same seed and
//! inputs, every function returns bit-identical results.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod inference;
pub mod net;
pub mod preprocess;
mod seed;
pub mod synthetic;
pub mod training;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use data::{Dataset, Event, FeatureSchema};
pub use error::{Error, Result};
pub use inference::{predict_next, rollout, Model, PredictionDistribution, RolloutResult};
pub use net::{param_count, NetConfig, StackedLstmParams};
pub use preprocess::NormStats;
pub use seed::derive_seed;
pub use training::{fit, TrainConfig};

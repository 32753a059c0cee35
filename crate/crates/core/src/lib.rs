//! Semi-supervised anomaly detection for univariate time series with a
//! reward-shaped deep Q-learning agent.

pub mod active;
pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod reward;
pub mod timeseries;
pub mod vae;

pub use error::{Error, Result};

//! Deep Q-learning agent, replay memory, isolation-forest warm-up and the
//! episode loop.

mod dqn;
mod iforest;
mod replay;
mod train;

use serde::{Deserialize, Serialize};

pub use dqn::{greedy, q_network_spec, DqnAgent, EpsilonSchedule, QNetworkKind};
pub use iforest::{average_path_length, fit_isolation_forest, top_outliers, IsolationForest, IsolationTree, Node};
pub use replay::{ReplayMemory, Transition};
pub use train::{train, warm_up, EpisodeRecord, TrainSettings, WarmUpReport};

use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between target-network syncs.
    pub sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub init_mem: usize,
    /// Fraction of warm-up states that get the heuristic anomaly action.
    pub outlier_fraction: f64,
    pub forest_trees: usize,
    pub forest_subsample: usize,
    pub q_network: QNetworkKind,
    pub q_hidden: usize,
    /// Environment steps per gradient update.
    pub train_every: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            learning_rate: 1e-3,
            replay_capacity: 10_000,
            batch_size: 64,
            sync_interval: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 5_000,
            init_mem: 1_000,
            outlier_fraction: 0.02,
            forest_trees: 100,
            forest_subsample: 256,
            q_network: QNetworkKind::Recurrent,
            q_hidden: 32,
            train_every: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_mem > self.replay_capacity {
            return Err(Error::Config(format!(
                "init_mem {} exceeds replay capacity {}",
                self.init_mem, self.replay_capacity
            )));
        }
        if self.batch_size == 0 || self.q_hidden == 0 || self.train_every == 0 {
            return Err(Error::Config("batch_size, q_hidden and train_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config("outlier_fraction must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if self.sync_interval == 0 {
            return Err(Error::Config("sync_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_steps: self.epsilon_decay_steps,
        }
    }

    pub fn build_agent(&self, n_steps: usize, seed: u64) -> Result<DqnAgent> {
        self.validate()?;
        let spec = q_network_spec(self.q_network, n_steps, self.q_hidden)?;
        DqnAgent::new(
            Network::init(spec, seed)?,
            self.gamma,
            self.learning_rate,
            self.sync_interval,
            self.schedule(),
        )
    }
}

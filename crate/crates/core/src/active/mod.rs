//! Margin-based query selection, label oracles and label propagation.

mod learner;
mod margin;
mod oracle;
mod pool;
mod propagate;

pub use learner::{ActiveLearner, ActiveRound};
pub use margin::{margin, select_queries, smallest_margins, ActionValues};
pub use oracle::{
    HumanChannelOracle, LabelMessage, LabelOracle, Provenance, QueryMessage, ServiceEvent, SimulatedOracle,
    StatusMessage,
};
pub use pool::{query_oracle, LabelPool, QueryOutcome};
pub use propagate::{median_distance, propagate_labels, Propagation, PropagationConfig, SimilarityGraph, BANDWIDTH_SAMPLE};

/// Query budget for `query_rate` of `windows`, rounded up.
pub fn budget_for(query_rate: f64, windows: usize) -> usize {
    (query_rate * windows as f64).ceil() as usize
}

/// Queries allotted to `episode` when `budget` is spread evenly over
/// `episodes`.
pub fn queries_for_episode(budget: usize, episodes: usize, episode: usize) -> usize {
    if episodes == 0 {
        return 0;
    }
    (episode + 1) * budget / episodes - episode * budget / episodes
}

use serde::{Deserialize, Serialize};

use super::{
    propagate_labels, query_oracle, select_queries, ActionValues, LabelOracle, LabelPool, PropagationConfig,
    Provenance, SimilarityGraph, StatusMessage,
};
use crate::env::Environment;
use crate::error::{Error, Result};

/// What one end-of-episode active-learning round did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActiveRound {
    pub queried: usize,
    pub timed_out: bool,
    pub propagated: usize,
    pub propagation_iters: usize,
}

/// Owns the label pool and oracle, and keeps the environment's visible
/// labels in sync with them.
pub struct ActiveLearner {
    pub pool: LabelPool,
    oracle: Box<dyn LabelOracle + Send>,
    graph: Option<SimilarityGraph>,
    config: PropagationConfig,
    episodes: usize,
}

impl std::fmt::Debug for ActiveLearner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActiveLearner")
            .field("pool", &self.pool)
            .field("config", &self.config)
            .field("episodes", &self.episodes)
            .finish_non_exhaustive()
    }
}

impl ActiveLearner {
    /// `graph` of `None` disables propagation. `episodes` is the number the
    /// budget is spread over.
    pub fn new(
        pool: LabelPool,
        oracle: Box<dyn LabelOracle + Send>,
        graph: Option<SimilarityGraph>,
        config: PropagationConfig,
        episodes: usize,
    ) -> Result<Self> {
        if let Some(g) = &graph {
            if g.len() != pool.len() {
                return Err(Error::Shape(format!("graph has {} nodes, pool {}", g.len(), pool.len())));
            }
        }
        Ok(ActiveLearner {
            pool,
            oracle,
            graph,
            config,
            episodes,
        })
    }

    /// Budget the schedule allows to be spent by the end of `episode`.
    fn allowance(&self, episode: usize) -> usize {
        if self.episodes == 0 {
            return 0;
        }
        let n = (episode + 1).min(self.episodes);
        n * self.pool.budget_total() / self.episodes
    }

    /// Queries the most uncertain unlabeled windows, then re-propagates.
    /// A budget share lost to an oracle timeout is carried to later rounds.
    pub fn round<Q: ActionValues + ?Sized>(
        &mut self,
        model: &Q,
        env: &mut Environment,
        episode: usize,
    ) -> Result<ActiveRound> {
        let mut out = ActiveRound::default();
        let candidates: Vec<usize> = (0..self.pool.len()).filter(|&i| !self.pool.is_fixed(i)).collect();
        let k = self
            .allowance(episode)
            .saturating_sub(self.pool.budget_spent())
            .min(self.pool.budget_left())
            .min(candidates.len());
        if k > 0 {
            let data = env.data();
            let picks = select_queries(model, candidates.iter().map(|&i| (i, data.window(i))), k)?;
            match query_oracle(&mut self.pool, data, &picks, self.oracle.as_mut()) {
                Ok(outcome) => out.queried = outcome.labeled.len(),
                Err(Error::Timeout(_)) => out.timed_out = true,
                Err(e) => return Err(e),
            }
        }
        if out.queried > 0 {
            if let Some(graph) = &self.graph {
                let fixed = self.pool.fixed_labels();
                let prop = propagate_labels(graph, &fixed, self.config.max_iters, self.config.tol)?;
                out.propagation_iters = prop.iterations;
                self.pool.replace_propagated(&prop.pseudo_labels(self.config.confidence));
            }
        }
        out.propagated = self.pool.count(Provenance::Propagated);
        self.sync(env);
        Ok(out)
    }

    /// Copies the pool's labels into the environment.
    pub fn sync(&self, env: &mut Environment) {
        for (i, &l) in self.pool.labels().iter().enumerate() {
            env.set_visible_label(i, l);
        }
    }

    pub fn notify(&mut self, status: &StatusMessage) {
        self.oracle.notify(status);
    }

    pub fn budget_spent(&self) -> usize {
        self.pool.budget_spent()
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dqn::DqnAgent;
use super::iforest::{top_outliers, IsolationForest};
use super::replay::{ReplayMemory, Transition};
use crate::active::{ActiveLearner, StatusMessage};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::reward::LambdaController;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmUpReport {
    pub transitions: usize,
    /// Number of top-scoring states given the heuristic anomaly action.
    pub outliers: usize,
}

/// Fills `memory` with `init_mem` transitions from consecutive episodes
/// starting at window 0. The `outlier_fraction · init_mem` visited states
/// the forest scores highest get action 1; all others get a uniform random
/// action. Rewards use the controller's current λ.
#[allow(clippy::too_many_arguments)]
pub fn warm_up(
    env: &mut Environment,
    forest: Option<&IsolationForest>,
    outlier_fraction: f64,
    init_mem: usize,
    r2: &[f64],
    controller: &LambdaController,
    memory: &mut ReplayMemory,
    rng: &mut impl Rng,
) -> Result<WarmUpReport> {
    if init_mem > memory.capacity() {
        return Err(Error::Config(format!(
            "init_mem {init_mem} exceeds replay capacity {}",
            memory.capacity()
        )));
    }
    if init_mem > env.len() {
        return Err(Error::Data(format!(
            "warm-up needs {init_mem} states but the environment has {}",
            env.len()
        )));
    }
    let m = match forest {
        Some(_) => (outlier_fraction * init_mem as f64).round() as usize,
        None => 0,
    };
    let mut heuristic = vec![false; init_mem];
    if let Some(forest) = forest {
        let scores: Vec<f64> = (0..init_mem).map(|i| forest.score(env.window(i))).collect();
        for i in top_outliers(&scores, m) {
            heuristic[i] = true;
        }
    }
    let mut added = 0;
    let mut start = 0;
    while added < init_mem {
        if start >= env.len() {
            return Err(Error::Data("environment exhausted during warm-up".into()));
        }
        env.reset(Some(start), rng)?;
        loop {
            let index = env.cursor();
            let state = env.window(index).to_vec();
            let action = if heuristic.get(index).copied().unwrap_or(false) {
                1
            } else {
                u8::from(rng.random_bool(0.5))
            };
            let step = env.step(action)?;
            let reward = controller.total_reward(step.r1, r2[index])?;
            memory.push(Transition {
                state,
                action,
                reward,
                next_state: step.next_state,
                done: step.done,
            })?;
            added += 1;
            if step.done || added == init_mem {
                start = index + 1;
                break;
            }
        }
    }
    Ok(WarmUpReport {
        transitions: added,
        outliers: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub episodes: usize,
    pub batch_size: usize,
    pub train_every: u64,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Sum of total rewards `r1 + λ·r2` over the episode.
    pub reward: f64,
    pub r1: f64,
    pub r2: f64,
    /// λ in effect during the episode.
    pub lambda: f64,
    pub mean_loss: f64,
    pub epsilon: f64,
    pub queries_spent: usize,
    pub queried: usize,
    pub propagated: usize,
    pub query_timeout: bool,
    pub steps: usize,
}

/// The episode loop: ε-greedy steps with shaped rewards, a minibatch update
/// every `train_every` steps once memory holds a batch, target syncs every
/// `sync_interval` steps, then per episode an active-learning round and a λ
/// update. `on_episode` sees each record, and the agent, as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train(
    agent: &mut DqnAgent,
    env: &mut Environment,
    r2: &[f64],
    controller: &mut LambdaController,
    mut learner: Option<&mut ActiveLearner>,
    memory: &mut ReplayMemory,
    settings: TrainSettings,
    rng: &mut impl Rng,
    mut on_episode: impl FnMut(&EpisodeRecord, &DqnAgent) -> Result<()>,
) -> Result<Vec<EpisodeRecord>> {
    if r2.len() != env.len() {
        return Err(Error::Shape(format!("{} R2 values for {} windows", r2.len(), env.len())));
    }
    if settings.train_every == 0 {
        return Err(Error::Config("train_every must be positive".into()));
    }
    let mut log = Vec::with_capacity(settings.episodes);
    for episode in 0..settings.episodes {
        let lambda = controller.lambda();
        env.reset(None, rng)?;
        let (mut total, mut r1_sum, mut r2_sum) = (0.0, 0.0, 0.0);
        let (mut loss_sum, mut updates, mut steps) = (0.0, 0usize, 0usize);
        loop {
            let index = env.cursor();
            let state = env.window(index).to_vec();
            let action = agent.select_action(&state, rng)?;
            let step = env.step(action)?;
            let reward = controller.total_reward(step.r1, r2[index])?;
            total += reward;
            r1_sum += step.r1;
            r2_sum += r2[index];
            memory.push(Transition {
                state,
                action,
                reward,
                next_state: step.next_state,
                done: step.done,
            })?;
            agent.step_count += 1;
            steps += 1;
            if memory.len() >= settings.batch_size && agent.step_count % settings.train_every == 0 {
                loss_sum += agent.train_step(memory, settings.batch_size, rng)?;
                updates += 1;
            }
            if agent.step_count % agent.sync_interval == 0 {
                agent.sync_target();
            }
            if step.done {
                break;
            }
        }
        let round = match learner.as_deref_mut() {
            Some(l) => Some(l.round(agent, env, episode)?),
            None => None,
        };
        controller.update(total);
        let record = EpisodeRecord {
            episode,
            reward: total,
            r1: r1_sum,
            r2: r2_sum,
            lambda,
            mean_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
            epsilon: agent.epsilon(),
            queries_spent: learner.as_deref().map_or(0, ActiveLearner::budget_spent),
            queried: round.as_ref().map_or(0, |r| r.queried),
            propagated: round.as_ref().map_or(0, |r| r.propagated),
            query_timeout: round.as_ref().is_some_and(|r| r.timed_out),
            steps,
        };
        if let Some(l) = learner.as_deref_mut() {
            l.notify(&StatusMessage {
                episode,
                lambda: controller.lambda(),
                budget_spent: l.budget_spent(),
            });
        }
        on_episode(&record, agent)?;
        log.push(record);
    }
    Ok(log)
}

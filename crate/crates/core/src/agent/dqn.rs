use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayMemory, Transition};
use crate::active::ActionValues;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, LayerSpec, Network, NetworkSpec};

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            decay_steps: 1,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.end;
        }
        let slope = (self.start - self.end) / self.decay_steps as f64;
        (self.start - step as f64 * slope).max(self.end)
    }
}

/// Which Q-network architecture to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QNetworkKind {
    /// Recurrent cell over the window followed by a linear two-value head.
    Recurrent,
    /// Two tanh dense layers over the flat window.
    Dense,
}

pub fn q_network_spec(kind: QNetworkKind, n_steps: usize, hidden: usize) -> Result<NetworkSpec> {
    match kind {
        QNetworkKind::Recurrent => NetworkSpec::new(vec![
            LayerSpec::recurrent(1, hidden, Activation::Tanh),
            LayerSpec::dense(hidden, 2, Activation::Identity),
        ]),
        QNetworkKind::Dense => NetworkSpec::mlp(&[n_steps, hidden, hidden, 2], Activation::Tanh, Activation::Identity),
    }
}

/// Deep Q-learning agent with a frozen target network.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q: Network,
    pub target: Network,
    optimizer: Adam,
    pub gamma: f64,
    pub learning_rate: f64,
    pub sync_interval: u64,
    pub schedule: EpsilonSchedule,
    /// Environment steps taken under this agent's policy.
    pub step_count: u64,
}

impl DqnAgent {
    pub fn new(q: Network, gamma: f64, learning_rate: f64, sync_interval: u64, schedule: EpsilonSchedule) -> Result<Self> {
        if q.spec.output_width() != 2 {
            return Err(Error::Spec("a Q-network must emit one value per action".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&schedule.start) || !(0.0..=1.0).contains(&schedule.end) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if sync_interval == 0 {
            return Err(Error::Config("sync interval must be positive".into()));
        }
        Ok(DqnAgent {
            target: q.clone(),
            q,
            optimizer: Adam::default(),
            gamma,
            learning_rate,
            sync_interval,
            schedule,
            step_count: 0,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.at(self.step_count)
    }

    pub fn q_values(&self, state: &[f64]) -> Result<[f64; 2]> {
        let out = self.q.predict(state)?;
        Ok([out[0], out[1]])
    }

    /// Argmax over Q; ties go to action 0 (normal).
    pub fn greedy_action(&self, state: &[f64]) -> Result<u8> {
        Ok(greedy(self.q_values(state)?))
    }

    /// ε-greedy action with ε taken from the schedule at the current step.
    pub fn select_action(&self, state: &[f64], rng: &mut impl Rng) -> Result<u8> {
        let epsilon = self.epsilon();
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(u8::from(rng.random_bool(0.5)));
        }
        self.greedy_action(state)
    }

    /// `r` for terminal transitions, `r + γ·max_a′ Q_target(s′, a′)` otherwise.
    pub fn bellman_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        batch
            .iter()
            .map(|t| match (&t.next_state, t.done) {
                (Some(next), false) => {
                    let q = self.target.predict(next)?;
                    Ok(t.reward + self.gamma * q[0].max(q[1]))
                }
                _ => Ok(t.reward),
            })
            .collect()
    }

    /// One minibatch regression of `Q(s, a)` onto the Bellman targets.
    /// Only the taken action's output receives gradient. Returns the mean
    /// squared TD error before the update.
    pub fn train_on_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = self.bellman_targets(batch)?;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(&targets) {
            let (q, tape) = self.q.forward(&t.state)?;
            let a = t.action as usize;
            let td = q[a] - y;
            loss += td * td;
            let mut grad = [0.0; 2];
            grad[a] = 2.0 * td * scale;
            self.q.backward(&tape, &grad)?;
        }
        self.optimizer.step(&mut self.q.store, self.learning_rate)?;
        Ok(loss * scale)
    }

    /// Samples `batch_size` distinct transitions and trains on them.
    pub fn train_step(&mut self, memory: &ReplayMemory, batch_size: usize, rng: &mut impl Rng) -> Result<f64> {
        let batch = memory.sample(batch_size, rng)?;
        self.train_on_batch(&batch)
    }

    pub fn sync_target(&mut self) {
        self.target
            .store
            .copy_values_from(&self.q.store)
            .expect("target shares the Q-network layout");
    }
}

pub fn greedy(q: [f64; 2]) -> u8 {
    u8::from(q[1] > q[0])
}

impl ActionValues for DqnAgent {
    fn action_values(&self, state: &[f64]) -> Result<[f64; 2]> {
        self.q_values(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParameterStore, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Q(s) = (bias0, bias1) for any one-wide state.
    fn constant_agent(q0: f64, q1: f64, epsilon: f64) -> DqnAgent {
        let spec = NetworkSpec::new(vec![LayerSpec::dense(1, 2, Activation::Identity)]).unwrap();
        let w = Tensor::zeros("layer0.weight", vec![2, 1]);
        let mut b = Tensor::zeros("layer0.bias", vec![2]);
        b.value = vec![q0, q1];
        let net = Network::from_parts(spec, ParameterStore::from_tensors(vec![w, b], 0).unwrap()).unwrap();
        DqnAgent::new(net, 0.9, 1e-3, 10, EpsilonSchedule::constant(epsilon)).unwrap()
    }

    fn tr(reward: f64, next: Option<f64>, done: bool) -> Transition {
        Transition {
            state: vec![0.0],
            action: 0,
            reward,
            next_state: next.map(|v| vec![v]),
            done,
        }
    }

    #[test]
    fn epsilon_schedule_formula() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_steps: 5000,
        };
        for step in [0u64, 1, 100, 2500, 4999, 5000, 9000] {
            let expected = (1.0 - step as f64 * (0.95 / 5000.0)).max(0.05);
            assert_eq!(s.at(step), expected);
        }
    }

    #[test]
    fn greedy_and_ties() {
        assert_eq!(constant_agent(0.2, 0.9, 0.0).select_action(&[0.0], &mut rand::rng()).unwrap(), 1);
        assert_eq!(constant_agent(0.5, 0.5, 0.0).select_action(&[0.0], &mut rand::rng()).unwrap(), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let agent = constant_agent(0.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let ones: usize = (0..n)
            .map(|_| agent.select_action(&[0.0], &mut rng).unwrap() as usize)
            .sum();
        let expected = n as f64 / 2.0;
        let chi2 = 2.0 * (ones as f64 - expected).powi(2) / expected;
        // χ²(1) critical value at p = 0.01.
        assert!(chi2 < 6.635, "chi2 = {chi2}");
    }

    #[test]
    fn bellman_examples() {
        let agent = constant_agent(1.0, 2.0, 0.0);
        let targets = agent
            .bellman_targets(&[&tr(5.0, None, true), &tr(1.0, Some(0.0), false), &tr(5.0, Some(0.0), true)])
            .unwrap();
        assert_eq!(targets[0], 5.0);
        assert!((targets[1] - 2.8).abs() < 1e-12);
        assert_eq!(targets[2], 5.0);

        let mut myopic = constant_agent(1.0, 2.0, 0.0);
        myopic.gamma = f64::MIN_POSITIVE;
        let t = myopic.bellman_targets(&[&tr(3.0, Some(0.0), false)]).unwrap();
        assert!((t[0] - 3.0).abs() < 1e-300);
    }

    #[test]
    fn zero_td_error_leaves_parameters() {
        // Terminal reward 1 equals Q(s, 0) = 1.
        let mut agent = constant_agent(1.0, 2.0, 0.0);
        let before = agent.q.clone();
        let batch = [&tr(1.0, None, true)];
        let loss = agent.train_on_batch(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.q.store.tensors(), before.store.tensors());
    }

    #[test]
    fn batch_larger_than_memory_is_contract_error() {
        let mut agent = constant_agent(0.0, 0.0, 0.0);
        let mut mem = ReplayMemory::new(10).unwrap();
        mem.push(tr(1.0, None, true)).unwrap();
        assert!(matches!(
            agent.train_step(&mem, 2, &mut rand::rng()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn target_changes_only_on_sync() {
        let spec = q_network_spec(QNetworkKind::Dense, 3, 4).unwrap();
        let mut agent = DqnAgent::new(Network::init(spec, 1).unwrap(), 0.9, 1e-2, 10, EpsilonSchedule::constant(0.0)).unwrap();
        let frozen = agent.target.store.tensors().to_vec();
        let mut mem = ReplayMemory::new(10).unwrap();
        for i in 0..4 {
            mem.push(Transition {
                state: vec![i as f64, 0.0, 1.0],
                action: (i % 2) as u8,
                reward: 1.0,
                next_state: Some(vec![0.0, 1.0, i as f64]),
                done: false,
            })
            .unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            agent.train_step(&mem, 4, &mut rng).unwrap();
        }
        assert_eq!(agent.target.store.tensors(), &frozen[..]);
        assert_ne!(agent.q.store.tensors(), &frozen[..]);
        agent.sync_target();
        agent.sync_target();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_eq!(agent.q.predict(&s).unwrap(), agent.target.predict(&s).unwrap());
        }
    }
}

//! Sequential window-classification environment.
//!
//! Each step presents one window; the action labels its last point (0 normal,
//! 1 anomaly) and the cursor advances by one window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::WindowDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub tp_val: f64,
    pub tn_val: f64,
    pub fp_val: f64,
    pub fn_val: f64,
    pub episode_length: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            tp_val: 5.0,
            tn_val: 1.0,
            fp_val: -1.0,
            fn_val: -5.0,
            episode_length: 300,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tp_val > 0.0 && self.tn_val > 0.0 && self.fp_val < 0.0 && self.fn_val < 0.0) {
            return Err(Error::Config(
                "rewards must satisfy tp_val > 0, tn_val > 0, fp_val < 0, fn_val < 0".into(),
            ));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be positive".into()));
        }
        Ok(())
    }

    /// Classification reward for `action` when the last point's label is `label`.
    pub fn classification_reward(&self, action: u8, label: u8) -> f64 {
        match (action, label) {
            (1, 1) => self.tp_val,
            (0, 0) => self.tn_val,
            (1, _) => self.fp_val,
            _ => self.fn_val,
        }
    }

    /// `(reward for predicting normal, reward for predicting anomaly)`.
    pub fn reward_vector(&self, label: u8) -> (f64, f64) {
        (self.classification_reward(0, label), self.classification_reward(1, label))
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Window that was just classified.
    pub index: usize,
    /// Next window, or `None` at the end of the series.
    pub next_state: Option<Vec<f64>>,
    pub r1: f64,
    /// Label the reward was computed from; `None` when it is unknown.
    pub label: Option<u8>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    data: WindowDataset,
    config: EnvConfig,
    /// Labels the reward may use: ground truth, oracle answers or
    /// pseudo-labels, depending on how the environment is driven.
    visible: Vec<Option<u8>>,
    cursor: usize,
    steps_taken: usize,
    active: bool,
}

impl Environment {
    /// Environment whose rewards use every ground-truth label of `data`.
    pub fn with_ground_truth(data: WindowDataset, config: EnvConfig) -> Result<Self> {
        let labels = data
            .labels()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))?
            .iter()
            .map(|&l| Some(l))
            .collect();
        Environment::new(data, config, labels)
    }

    pub fn new(data: WindowDataset, config: EnvConfig, visible: Vec<Option<u8>>) -> Result<Self> {
        config.validate()?;
        if visible.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} visible labels for {} windows",
                visible.len(),
                data.len()
            )));
        }
        Ok(Environment {
            data,
            config,
            visible,
            cursor: 0,
            steps_taken: 0,
            active: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn data(&self) -> &WindowDataset {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        self.data.window(i)
    }

    pub fn visible_label(&self, i: usize) -> Option<u8> {
        self.visible[i]
    }

    pub fn set_visible_label(&mut self, i: usize, label: Option<u8>) {
        self.visible[i] = label;
    }

    /// Index of the window the next `step` classifies.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Starts an episode at `start`, or at a uniformly drawn index that
    /// leaves room for a full episode.
    pub fn reset(&mut self, start: Option<usize>, rng: &mut impl Rng) -> Result<&[f64]> {
        let len = self.data.len();
        if self.config.episode_length > len {
            return Err(Error::Config(format!(
                "episode_length {} exceeds the {len} available windows",
                self.config.episode_length
            )));
        }
        let start = match start {
            Some(s) if s < len => s,
            Some(s) => {
                return Err(Error::Config(format!("start {s} is outside the {len} windows")));
            }
            None => rng.random_range(0..=len - self.config.episode_length),
        };
        self.cursor = start;
        self.steps_taken = 0;
        self.active = true;
        Ok(self.data.window(start))
    }

    pub fn reward_vector(&self, label: u8) -> (f64, f64) {
        self.config.reward_vector(label)
    }

    pub fn step(&mut self, action: u8) -> Result<StepResult> {
        if !self.active {
            return Err(Error::Contract("step called outside an active episode".into()));
        }
        if action > 1 {
            return Err(Error::Argument(format!("action must be 0 or 1, got {action}")));
        }
        let index = self.cursor;
        let label = self.visible[index];
        let r1 = label.map_or(0.0, |y| self.config.classification_reward(action, y));
        self.steps_taken += 1;
        self.cursor += 1;
        let at_end = self.cursor >= self.data.len();
        let done = at_end || self.steps_taken >= self.config.episode_length;
        if done {
            self.active = false;
        }
        Ok(StepResult {
            index,
            next_state: (!at_end).then(|| self.data.window(self.cursor).to_vec()),
            r1,
            label,
            done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(labels: Vec<u8>, episode_length: usize) -> Environment {
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64, 0.0]).collect();
        let data = WindowDataset::from_rows(&rows, Some(labels)).unwrap();
        Environment::with_ground_truth(
            data,
            EnvConfig {
                episode_length,
                ..EnvConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn reward_table() {
        let c = EnvConfig::default();
        assert_eq!(c.classification_reward(1, 1), 5.0);
        assert_eq!(c.classification_reward(0, 0), 1.0);
        assert_eq!(c.classification_reward(1, 0), -1.0);
        assert_eq!(c.classification_reward(0, 1), -5.0);
        assert_eq!(c.reward_vector(1), (-5.0, 5.0));
        assert_eq!(c.reward_vector(0), (1.0, -1.0));
    }

    #[test]
    fn step_matches_reward_vector() {
        for y in [0u8, 1] {
            for a in [0u8, 1] {
                let mut e = env(vec![y; 4], 2);
                e.reset(Some(0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                let r = e.step(a).unwrap();
                let (r0, r1) = e.reward_vector(y);
                assert_eq!(r.r1, if a == 0 { r0 } else { r1 });
            }
        }
    }

    #[test]
    fn reset_start_and_seed() {
        let mut e = env(vec![0; 50], 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(e.reset(Some(0), &mut rng).unwrap(), &[0.0, 0.0]);
        e.reset(None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let a = e.cursor();
        e.reset(None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, e.cursor());
        assert!(a <= 40);
    }

    #[test]
    fn episode_longer_than_data_is_config_error() {
        let mut e = env(vec![0; 5], 6);
        assert!(matches!(
            e.reset(None, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn visits_in_order_and_stops() {
        let mut e = env(vec![0; 10], 4);
        e.reset(Some(3), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut seen = vec![];
        loop {
            let r = e.step(0).unwrap();
            seen.push(r.index);
            if r.done {
                break;
            }
        }
        assert_eq!(seen, vec![3, 4, 5, 6]);
        assert!(matches!(e.step(0), Err(Error::Contract(_))));
    }

    #[test]
    fn series_end_is_terminal() {
        let mut e = env(vec![0; 5], 5);
        e.reset(Some(3), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = e.step(0).unwrap();
        assert!(!r.done);
        assert_eq!(r.next_state, Some(vec![4.0, 0.0]));
        let r = e.step(0).unwrap();
        assert!(r.done);
        assert_eq!(r.next_state, None);
    }

    #[test]
    fn perfect_policy_reward() {
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i % 7 == 3)).collect();
        let k = labels.iter().filter(|&&l| l == 1).count() as f64;
        let m = labels.len() as f64 - k;
        let mut e = env(labels.clone(), 30);
        e.reset(Some(0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut total = 0.0;
        for &y in &labels {
            total += e.step(y).unwrap().r1;
        }
        assert_eq!(total, 5.0 * k + m);
    }

    #[test]
    fn unknown_label_gives_zero() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let data = WindowDataset::from_rows(&rows, None).unwrap();
        let mut e = Environment::new(data, EnvConfig { episode_length: 3, ..Default::default() }, vec![None, Some(1), None]).unwrap();
        e.reset(Some(0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(e.step(1).unwrap().r1, 0.0);
        assert_eq!(e.step(1).unwrap().r1, 5.0);
        e.set_visible_label(2, Some(0));
        assert_eq!(e.step(1).unwrap().r1, -1.0);
    }

    #[test]
    fn invalid_reward_signs_rejected() {
        let c = EnvConfig {
            fp_val: 1.0,
            ..EnvConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}

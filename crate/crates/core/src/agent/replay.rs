use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

/// One `(s, a, r, s′)` experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: u8,
    /// Shaped reward `R1 + λ·R2`.
    pub reward: f64,
    /// `None` when the series ended after this step.
    pub next_state: Option<Vec<f64>>,
    /// Terminal transitions are not bootstrapped.
    pub done: bool,
}

/// Fixed-capacity FIFO experience buffer.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayMemory {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::Numeric {
                name: "reward".into(),
                message: format!("transition reward is {}", t.reward),
            });
        }
        if let Some(next) = &t.next_state {
            if next.len() != t.state.len() {
                return Err(Error::Shape("state and next state differ in width".into()));
            }
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch_size` distinct transitions drawn uniformly.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        if batch_size == 0 || batch_size > self.items.len() {
            return Err(Error::Contract(format!(
                "cannot draw {batch_size} transitions from a memory of {}",
                self.items.len()
            )));
        }
        Ok(sample(rng, self.items.len(), batch_size)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

//! Point-level precision, recall and F1, and greedy validation runs.

use serde::{Deserialize, Serialize};

use crate::active::ActionValues;
use crate::agent::greedy;
use crate::error::{Error, Result};
use crate::timeseries::WindowDataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio was 0/0 and defaulted to 0.
    pub degenerate: bool,
}

impl ConfusionCounts {
    pub fn accumulate(&mut self, predicted: u8, actual: u8) {
        match (predicted, actual) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn scores(&self) -> Scores {
        let mut degenerate = false;
        let mut ratio = |num: f64, den: f64| {
            if den == 0.0 {
                degenerate = true;
                0.0
            } else {
                num / den
            }
        };
        let tp = self.tp as f64;
        let precision = ratio(tp, tp + self.fp as f64);
        let recall = ratio(tp, tp + self.fn_ as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Scores {
            precision,
            recall,
            f1,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub episode: usize,
    /// Window index within the evaluated split.
    pub window: usize,
    /// Index of the scored point in the split's raw series.
    pub point: usize,
    pub prediction: u8,
    pub actual: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub counts: ConfusionCounts,
    pub scores: Scores,
    pub episodes: usize,
    /// Leading points that no window ends on and so are never scored.
    pub excluded_points: usize,
    pub trace: Vec<TraceStep>,
}

/// Validation episodes for a run of `n` training episodes: `⌈n/10⌉`, at
/// least one.
pub fn validation_episodes(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

/// Greedy (ε = 0) pass over every window of `data`, split into `episodes`
/// contiguous tiles of near-equal length.
pub fn validate<Q: ActionValues + ?Sized>(model: &Q, data: &WindowDataset, episodes: usize) -> Result<Validation> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data("evaluation requires labels".into()))?;
    if data.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let episodes = episodes.clamp(1, data.len());
    let mut counts = ConfusionCounts::default();
    let mut trace = Vec::with_capacity(data.len());
    for episode in 0..episodes {
        let lo = episode * data.len() / episodes;
        let hi = (episode + 1) * data.len() / episodes;
        for i in lo..hi {
            let prediction = greedy(model.action_values(data.window(i))?);
            counts.accumulate(prediction, labels[i]);
            trace.push(TraceStep {
                episode,
                window: i,
                point: i + data.n_steps() - 1,
                prediction,
                actual: labels[i],
            });
        }
    }
    Ok(Validation {
        scores: counts.scores(),
        counts,
        episodes,
        excluded_points: data.n_steps() - 1,
        trace,
    })
}

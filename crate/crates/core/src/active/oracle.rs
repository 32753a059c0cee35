//! Label sources and the messages exchanged with a labeling service.

use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GroundTruth,
    Human,
    Propagated,
}

/// Reals travel as decimal strings with 13 significant digits.
mod decimal_strings {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|v| format!("{v:.12e}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMessage {
    pub query_id: u64,
    pub window_index: usize,
    #[serde(with = "decimal_strings")]
    pub values: Vec<f64>,
    #[serde(with = "decimal_strings")]
    pub series_context: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMessage {
    pub query_id: u64,
    pub label: u8,
    pub annotator: String,
    pub timestamp: String,
}

/// Progress the training loop reports to a labeling service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMessage {
    pub episode: usize,
    pub lambda: f64,
    pub budget_spent: usize,
}

/// Traffic from the training loop to the labeling service.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceEvent {
    Queries(Vec<QueryMessage>),
    Status(StatusMessage),
    Finished,
}

pub trait LabelOracle {
    fn provenance(&self) -> Provenance;

    /// Labels for a batch of queries. All-or-nothing: an error leaves every
    /// query unanswered.
    fn request(&mut self, queries: &[QueryMessage]) -> Result<Vec<LabelMessage>>;

    fn notify(&mut self, _status: &StatusMessage) {}
}

/// Answers from the dataset's ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<u8>,
}

impl SimulatedOracle {
    pub fn new(labels: Vec<u8>) -> Self {
        SimulatedOracle { labels }
    }
}

impl LabelOracle for SimulatedOracle {
    fn provenance(&self) -> Provenance {
        Provenance::GroundTruth
    }

    fn request(&mut self, queries: &[QueryMessage]) -> Result<Vec<LabelMessage>> {
        queries
            .iter()
            .map(|q| {
                let label = *self.labels.get(q.window_index).ok_or_else(|| {
                    Error::Argument(format!("window {} has no ground truth", q.window_index))
                })?;
                Ok(LabelMessage {
                    query_id: q.query_id,
                    label,
                    annotator: "simulated".into(),
                    timestamp: String::new(),
                })
            })
            .collect()
    }
}

/// Posts batches to a labeling service over a channel and blocks until
/// every query in the batch is answered or the timeout passes.
#[derive(Debug)]
pub struct HumanChannelOracle {
    outbox: Sender<ServiceEvent>,
    inbox: Receiver<LabelMessage>,
    timeout: Duration,
}

impl HumanChannelOracle {
    pub fn new(outbox: Sender<ServiceEvent>, inbox: Receiver<LabelMessage>, timeout: Duration) -> Self {
        HumanChannelOracle { outbox, inbox, timeout }
    }
}

impl LabelOracle for HumanChannelOracle {
    fn provenance(&self) -> Provenance {
        Provenance::Human
    }

    fn request(&mut self, queries: &[QueryMessage]) -> Result<Vec<LabelMessage>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        self.outbox
            .send(ServiceEvent::Queries(queries.to_vec()))
            .map_err(|_| Error::Timeout("labeling service is gone".into()))?;
        let deadline = Instant::now() + self.timeout;
        let mut answers: Vec<Option<LabelMessage>> = vec![None; queries.len()];
        while answers.iter().any(Option::is_none) {
            let left = deadline.saturating_duration_since(Instant::now());
            let msg = match self.inbox.recv_timeout(left) {
                Ok(msg) => msg,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Timeout(format!(
                        "{} of {} labels missing after {:?}",
                        answers.iter().filter(|a| a.is_none()).count(),
                        queries.len(),
                        self.timeout
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Timeout("labeling service disconnected".into()))
                }
            };
            if msg.label > 1 {
                continue;
            }
            // Labels for earlier, skipped batches are dropped.
            if let Some(slot) = queries.iter().position(|q| q.query_id == msg.query_id) {
                answers[slot] = Some(msg);
            }
        }
        Ok(answers.into_iter().flatten().collect())
    }

    fn notify(&mut self, status: &StatusMessage) {
        let _ = self.outbox.send(ServiceEvent::Status(status.clone()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc::channel;

    fn query(id: u64, idx: usize) -> QueryMessage {
        QueryMessage {
            query_id: id,
            window_index: idx,
            values: vec![0.1, -2.5],
            series_context: vec![1.0 / 3.0],
        }
    }

    #[test]
    fn wire_format_uses_decimal_strings() {
        let text = serde_json::to_string(&query(4, 2)).unwrap();
        assert!(text.contains("\"3.333333333333e-1\""), "{text}");
        let back: QueryMessage = serde_json::from_str(&text).unwrap();
        assert_eq!(back.values, vec![0.1, -2.5]);
        assert!((back.series_context[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn simulated_copies_truth() {
        let mut o = SimulatedOracle::new(vec![0, 1, 0]);
        let got = o.request(&[query(0, 1), query(1, 2)]).unwrap();
        assert_eq!(got.iter().map(|m| m.label).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn human_channel_round_trip_and_timeout() {
        let (out_tx, out_rx) = channel();
        let (in_tx, in_rx) = channel();
        let mut oracle = HumanChannelOracle::new(out_tx, in_rx, Duration::from_millis(200));
        let labeler = std::thread::spawn(move || {
            let ServiceEvent::Queries(batch) = out_rx.recv().unwrap() else { panic!() };
            for q in batch.iter().rev() {
                in_tx
                    .send(LabelMessage {
                        query_id: q.query_id,
                        label: 1,
                        annotator: "t".into(),
                        timestamp: "0".into(),
                    })
                    .unwrap();
            }
            out_rx
        });
        let got = oracle.request(&[query(7, 0), query(8, 1)]).unwrap();
        assert_eq!(got.iter().map(|m| m.query_id).collect::<Vec<_>>(), vec![7, 8]);
        let _keep = labeler.join().unwrap();
        assert!(matches!(oracle.request(&[query(9, 0)]), Err(Error::Timeout(_))));
    }
}

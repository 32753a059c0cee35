use serde::{Deserialize, Serialize};

use super::oracle::{LabelOracle, Provenance, QueryMessage};
use crate::error::{Error, Result};
use crate::timeseries::WindowDataset;

/// Known labels over a window set, with where each came from and how much
/// of the query budget has been used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPool {
    labels: Vec<Option<u8>>,
    provenance: Vec<Option<Provenance>>,
    budget_spent: usize,
    budget_total: usize,
    next_query_id: u64,
}

/// Result of one batch sent to an oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    /// Indices that received a new oracle label.
    pub labeled: Vec<usize>,
    /// Indices skipped because an oracle label already existed.
    pub already_known: Vec<usize>,
}

impl LabelPool {
    pub fn new(len: usize, budget_total: usize) -> Self {
        LabelPool {
            labels: vec![None; len],
            provenance: vec![None; len],
            budget_spent: 0,
            budget_total,
            next_query_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<u8> {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Option<u8>] {
        &self.labels
    }

    pub fn provenance(&self, i: usize) -> Option<Provenance> {
        self.provenance[i]
    }

    pub fn budget_spent(&self) -> usize {
        self.budget_spent
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn budget_left(&self) -> usize {
        self.budget_total - self.budget_spent
    }

    /// True for labels from ground truth or a human; these are clamped.
    pub fn is_fixed(&self, i: usize) -> bool {
        matches!(self.provenance[i], Some(Provenance::GroundTruth | Provenance::Human))
    }

    /// Labels that propagation must not change, as a clamp vector.
    pub fn fixed_labels(&self) -> Vec<Option<u8>> {
        (0..self.len())
            .map(|i| if self.is_fixed(i) { self.labels[i] } else { None })
            .collect()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.provenance.iter().filter(|p| **p == Some(provenance)).count()
    }

    /// Records an oracle label without spending budget (seed labels).
    pub fn set_fixed(&mut self, i: usize, label: u8, provenance: Provenance) -> Result<()> {
        if label > 1 || provenance == Provenance::Propagated {
            return Err(Error::Argument("fixed labels must be 0/1 from an oracle".into()));
        }
        self.labels[i] = Some(label);
        self.provenance[i] = Some(provenance);
        Ok(())
    }

    /// Replaces all propagated labels with `pseudo`. Entries for fixed
    /// indices are ignored. Returns how many pseudo-labels were applied.
    pub fn replace_propagated(&mut self, pseudo: &[Option<u8>]) -> usize {
        let mut applied = 0;
        for i in 0..self.len() {
            if self.is_fixed(i) {
                continue;
            }
            self.labels[i] = pseudo.get(i).copied().flatten();
            self.provenance[i] = self.labels[i].map(|_| Provenance::Propagated);
            applied += usize::from(self.labels[i].is_some());
        }
        applied
    }

    /// Builds query messages for `indices`, allocating fresh ids.
    pub fn make_queries(&mut self, data: &WindowDataset, indices: &[usize]) -> Vec<QueryMessage> {
        indices
            .iter()
            .map(|&i| {
                let query_id = self.next_query_id;
                self.next_query_id += 1;
                QueryMessage {
                    query_id,
                    window_index: i,
                    values: data.window(i).to_vec(),
                    series_context: data.context(i),
                }
            })
            .collect()
    }
}

/// Asks `oracle` for the labels of `indices`. Indices that already carry an
/// oracle label cost nothing and are left alone. The batch either succeeds
/// as a whole or leaves the pool untouched: a budget overrun is reported
/// before the oracle is contacted and an oracle failure (such as a human
/// timeout) refunds the batch.
pub fn query_oracle(
    pool: &mut LabelPool,
    data: &WindowDataset,
    indices: &[usize],
    oracle: &mut dyn LabelOracle,
) -> Result<QueryOutcome> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= pool.len()) {
        return Err(Error::Argument(format!("window {bad} is outside the pool")));
    }
    let (already_known, mut fresh): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| pool.is_fixed(i));
    let mut seen = std::collections::HashSet::new();
    fresh.retain(|i| seen.insert(*i));
    if pool.budget_spent + fresh.len() > pool.budget_total {
        return Err(Error::Budget(format!(
            "{} labels requested with {} of {} left",
            fresh.len(),
            pool.budget_left(),
            pool.budget_total
        )));
    }
    let queries = pool.make_queries(data, &fresh);
    let answers = oracle.request(&queries)?;
    let provenance = oracle.provenance();
    for q in &queries {
        let answer = answers
            .iter()
            .find(|a| a.query_id == q.query_id)
            .ok_or_else(|| Error::Contract(format!("oracle skipped query {}", q.query_id)))?;
        if answer.label > 1 {
            return Err(Error::Contract(format!("oracle returned label {}", answer.label)));
        }
    }
    for q in &queries {
        let answer = answers.iter().find(|a| a.query_id == q.query_id).expect("checked above");
        pool.labels[q.window_index] = Some(answer.label);
        pool.provenance[q.window_index] = Some(provenance);
    }
    pool.budget_spent += fresh.len();
    Ok(QueryOutcome {
        labeled: fresh,
        already_known,
    })
}

#[cfg(test)]
mod tests {
    use super::super::oracle::{LabelMessage, SimulatedOracle};
    use super::*;

    fn data(n: usize) -> WindowDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        WindowDataset::from_rows(&rows, None).unwrap()
    }

    struct Failing;

    impl LabelOracle for Failing {
        fn provenance(&self) -> Provenance {
            Provenance::Human
        }
        fn request(&mut self, _: &[QueryMessage]) -> Result<Vec<LabelMessage>> {
            Err(Error::Timeout("no answer".into()))
        }
    }

    #[test]
    fn simulated_label_and_budget() {
        let d = data(5);
        let mut pool = LabelPool::new(5, 3);
        let mut o = SimulatedOracle::new(vec![0, 1, 0, 0, 1]);
        let out = query_oracle(&mut pool, &d, &[1], &mut o).unwrap();
        assert_eq!(out.labeled, vec![1]);
        assert_eq!(pool.label(1), Some(1));
        assert_eq!(pool.provenance(1), Some(Provenance::GroundTruth));
        assert_eq!(pool.budget_spent(), 1);
        // Repeat costs nothing.
        let out = query_oracle(&mut pool, &d, &[1], &mut o).unwrap();
        assert_eq!(out.already_known, vec![1]);
        assert_eq!(pool.budget_spent(), 1);
    }

    #[test]
    fn overrun_leaves_pool_unchanged() {
        let d = data(20);
        let mut pool = LabelPool::new(20, 10);
        let before = pool.clone();
        let idx: Vec<usize> = (0..11).collect();
        let mut o = SimulatedOracle::new(vec![0; 20]);
        assert!(matches!(query_oracle(&mut pool, &d, &idx, &mut o), Err(Error::Budget(_))));
        assert_eq!(pool, before);
    }

    #[test]
    fn oracle_failure_refunds() {
        let d = data(4);
        let mut pool = LabelPool::new(4, 4);
        assert!(matches!(query_oracle(&mut pool, &d, &[0, 2], &mut Failing), Err(Error::Timeout(_))));
        assert_eq!(pool.budget_spent(), 0);
        assert_eq!(pool.label(0), None);
    }

    #[test]
    fn propagation_never_overwrites_fixed() {
        let mut pool = LabelPool::new(3, 0);
        pool.set_fixed(0, 1, Provenance::Human).unwrap();
        let applied = pool.replace_propagated(&[Some(0), Some(0), None]);
        assert_eq!(applied, 1);
        assert_eq!(pool.label(0), Some(1));
        assert_eq!(pool.provenance(1), Some(Provenance::Propagated));
        pool.replace_propagated(&[None, None, Some(1)]);
        assert_eq!(pool.labels(), &[Some(1), None, Some(1)]);
    }
}

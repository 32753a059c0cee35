use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Anything that can score a state with one value per action.
pub trait ActionValues {
    fn action_values(&self, state: &[f64]) -> Result<[f64; 2]>;
}

pub fn margin(q: [f64; 2]) -> f64 {
    (q[0] - q[1]).abs()
}

fn by_margin_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// The `k` candidates with the smallest margins, ordered by margin and then
/// by ascending index. Input order does not matter.
pub fn smallest_margins(mut scored: Vec<(usize, f64)>, k: usize) -> Result<Vec<usize>> {
    if k > scored.len() {
        return Err(Error::Budget(format!(
            "{k} queries requested from a pool of {}",
            scored.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_margin_then_index);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_margin_then_index);
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Margin sampling: scores each `(index, state)` candidate and keeps the `k`
/// most uncertain.
pub fn select_queries<'a, Q, I>(model: &Q, candidates: I, k: usize) -> Result<Vec<usize>>
where
    Q: ActionValues + ?Sized,
    I: IntoIterator<Item = (usize, &'a [f64])>,
{
    let scored = candidates
        .into_iter()
        .map(|(i, s)| Ok((i, margin(model.action_values(s)?))))
        .collect::<Result<Vec<_>>>()?;
    smallest_margins(scored, k)
}

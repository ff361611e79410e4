//! Top-k selection shared by the sparse and dense retrievers.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Descending score, then ascending doc id. Scores must be finite.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .expect("finite scores")
        .then_with(|| a_id.cmp(b_id))
}

/// Selects the `k` best `(ordinal, score)` candidates and resolves
/// ordinals through `doc_ids`.
pub fn top_k<I>(candidates: I, k: usize, doc_ids: &[String]) -> Vec<Hit>
where
    I: IntoIterator<Item = (u32, f64)>,
{
    top_k_ordinals(candidates, k, doc_ids)
        .into_iter()
        .map(|(ord, score)| Hit {
            doc_id: doc_ids[ord as usize].clone(),
            score,
        })
        .collect()
}

pub(crate) fn top_k_ordinals<I>(candidates: I, k: usize, doc_ids: &[String]) -> Vec<(u32, f64)>
where
    I: IntoIterator<Item = (u32, f64)>,
{
    if k == 0 {
        return Vec::new();
    }
    let mut all: Vec<(u32, f64)> = candidates.into_iter().collect();
    let cmp = |a: &(u32, f64), b: &(u32, f64)| {
        rank_order(a.1, &doc_ids[a.0 as usize], b.1, &doc_ids[b.0 as usize])
    };
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all
}

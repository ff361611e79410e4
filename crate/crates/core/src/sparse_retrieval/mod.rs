//! Inverted index with Lucene-style BM25 ranking, plus RM3 pseudo-relevance
//! feedback as the classical expansion baseline.

mod index;
mod rm3;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecError;
use crate::ranking::{top_k_ordinals, Hit};
use crate::text_analysis::analyze;

pub use index::{build_index, IndexBuilder, InvertedIndex, Posting, INDEX_MAGIC};
pub use rm3::{rm3_expand, Rm3Params};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("{0}")]
    Invalid(String),
    #[error("index file: {0}")]
    Format(#[from] CodecError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    /// Anserini's MS MARCO passage defaults.
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(IndexError::Invalid(format!(
                "k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::Invalid(format!(
                "b must be in [0,1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Query as analyzed terms with weights. Plain text queries carry each
/// term's multiplicity as its weight.
pub type WeightedQuery = BTreeMap<String, f64>;

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`
pub fn idf(doc_count: usize, doc_freq: u32) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn tf_component(tf: u32, doc_len: u32, avg_doc_len: f64, params: &Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = if avg_doc_len > 0.0 {
        1.0 - params.b + params.b * doc_len as f64 / avg_doc_len
    } else {
        1.0
    };
    tf / (tf + params.k1 * norm)
}

/// BM25 score of one document for already-analyzed query terms, counting
/// repeated terms once per occurrence.
pub fn bm25_score(
    index: &InvertedIndex,
    query_terms: &[String],
    doc_ordinal: u32,
    params: &Bm25Params,
) -> f64 {
    let dl = index.doc_length(doc_ordinal);
    query_terms
        .iter()
        .map(|t| {
            let tf = index.term_freq(t, doc_ordinal);
            if tf == 0 {
                return 0.0;
            }
            idf(index.doc_count(), index.doc_freq(t))
                * tf_component(tf, dl, index.avg_doc_length(), params)
        })
        .sum()
}

/// Term multiplicities of an analyzed query.
pub fn term_counts(terms: &[String]) -> WeightedQuery {
    let mut counts = WeightedQuery::new();
    for t in terms {
        *counts.entry(t.clone()).or_default() += 1.0;
    }
    counts
}

/// Top-k documents for a text query. Only documents that match at least
/// one query term are returned; an empty analyzed query yields no hits.
pub fn search(index: &InvertedIndex, query_text: &str, k: usize, params: &Bm25Params) -> Vec<Hit> {
    let terms = analyze(query_text, index.analyzer());
    to_hits(
        index,
        score_weighted(index, &term_counts(&terms), k, params),
    )
}

fn to_hits(index: &InvertedIndex, ranked: Vec<(u32, f64)>) -> Vec<Hit> {
    ranked
        .into_iter()
        .map(|(ord, score)| Hit {
            doc_id: index.doc_id(ord).to_string(),
            score,
        })
        .collect()
}

/// Like [`search`], with each term's contribution scaled by its weight.
/// Weights must be finite and non-negative; zero-weight terms are ignored.
pub fn search_weighted(
    index: &InvertedIndex,
    wquery: &WeightedQuery,
    k: usize,
    params: &Bm25Params,
) -> Result<Vec<Hit>, IndexError> {
    if let Some((t, w)) = wquery.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(IndexError::Invalid(format!(
            "weight for {t:?} must be finite and >= 0, got {w}"
        )));
    }
    Ok(to_hits(index, score_weighted(index, wquery, k, params)))
}

fn score_weighted(
    index: &InvertedIndex,
    wquery: &WeightedQuery,
    k: usize,
    params: &Bm25Params,
) -> Vec<(u32, f64)> {
    let mut acc = vec![0.0f64; index.doc_count()];
    let mut touched: Vec<u32> = Vec::new();
    let avgdl = index.avg_doc_length();
    for (term, &weight) in wquery {
        if weight == 0.0 {
            continue;
        }
        let Some(list) = index.postings(term) else {
            continue;
        };
        let term_idf = idf(index.doc_count(), list.len() as u32);
        for p in list {
            let slot = &mut acc[p.doc as usize];
            if *slot == 0.0 {
                touched.push(p.doc);
            }
            *slot += weight * term_idf * tf_component(p.tf, index.doc_length(p.doc), avgdl, params);
        }
    }
    top_k_ordinals(
        touched.into_iter().map(|d| (d, acc[d as usize])),
        k,
        index.doc_ids(),
    )
}

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::text_analysis::analyze;

use super::{score_weighted, term_counts, Bm25Params, IndexError, InvertedIndex, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Interpolation weight of the original query (lambda).
    pub original_query_weight: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Rm3Params {
            fb_docs: 10,
            fb_terms: 10,
            original_query_weight: 0.5,
        }
    }
}

impl Rm3Params {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.fb_docs == 0 || self.fb_terms == 0 {
            return Err(IndexError::Invalid(
                "fb_docs and fb_terms must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.original_query_weight) {
            return Err(IndexError::Invalid(format!(
                "original query weight must be in [0,1], got {}",
                self.original_query_weight
            )));
        }
        Ok(())
    }
}

fn normalize(mut dist: WeightedQuery) -> WeightedQuery {
    let total: f64 = dist.values().sum();
    if total > 0.0 {
        dist.values_mut().for_each(|w| *w /= total);
    }
    dist
}

/// Expands a query with an RM3 relevance model.
///
/// The feedback model is RM1 over the top `fb_docs` BM25 hits:
/// `w(t) = sum_d P(t|d) * P(d)` with `P(t|d) = tf / |d|` and `P(d)` the
/// softmax of the retrieval scores. The `fb_terms` heaviest terms are kept
/// (ties by term), renormalized and interpolated with the normalized
/// original query. Terms with zero final weight are dropped.
pub fn rm3_expand(
    index: &InvertedIndex,
    query_text: &str,
    params: &Rm3Params,
    bm25: &Bm25Params,
) -> Result<WeightedQuery, IndexError> {
    params.validate()?;
    if params.fb_docs > index.doc_count() {
        return Err(IndexError::Invalid(format!(
            "fb_docs {} exceeds collection size {}",
            params.fb_docs,
            index.doc_count()
        )));
    }
    let counts = term_counts(&analyze(query_text, index.analyzer()));
    let hits = score_weighted(index, &counts, params.fb_docs, bm25);
    let original = normalize(counts);
    if hits.is_empty() {
        return Ok(original);
    }

    let max = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = hits.iter().map(|h| (h.1 - max).exp()).collect();
    let z: f64 = exp.iter().sum();

    let mut feedback: BTreeMap<&str, f64> = BTreeMap::new();
    for (&(ordinal, _), e) in hits.iter().zip(&exp) {
        let dl = index.doc_length(ordinal) as f64;
        let doc_weight = e / z;
        for (term, tf) in index.doc_terms(ordinal) {
            *feedback.entry(term).or_default() += tf as f64 / dl * doc_weight;
        }
    }

    let mut ranked: Vec<(&str, f64)> = feedback.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    ranked.truncate(params.fb_terms);
    let feedback = normalize(
        ranked
            .into_iter()
            .map(|(t, w)| (t.to_string(), w))
            .collect(),
    );

    let lambda = params.original_query_weight;
    let mut expanded = WeightedQuery::new();
    for (t, w) in original {
        *expanded.entry(t).or_default() += lambda * w;
    }
    for (t, w) in feedback {
        *expanded.entry(t).or_default() += (1.0 - lambda) * w;
    }
    expanded.retain(|_, w| *w > 0.0);
    Ok(expanded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Document;
    use crate::sparse_retrieval::{build_index, search, search_weighted};
    use crate::text_analysis::AnalyzerConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index(pairs: &[(&str, &str)]) -> InvertedIndex {
        let docs: Vec<Document> = pairs
            .iter()
            .map(|(id, text)| Document {
                doc_id: id.to_string(),
                text: text.to_string(),
            })
            .collect();
        build_index(&docs, &AnalyzerConfig::plain()).unwrap()
    }

    #[test]
    fn lambda_one_returns_original_distribution() {
        let idx = index(&[("d1", "a b c"), ("d2", "a d e"), ("d3", "f")]);
        let params = Rm3Params {
            original_query_weight: 1.0,
            fb_docs: 2,
            ..Rm3Params::default()
        };
        let wq = rm3_expand(&idx, "a a b", &params, &Bm25Params::default()).unwrap();
        let expected: WeightedQuery =
            [("a".to_string(), 2.0 / 3.0), ("b".to_string(), 1.0 / 3.0)].into();
        assert_eq!(wq, expected);
    }

    #[test]
    fn single_feedback_document_mle() {
        let idx = index(&[("d1", "a a b"), ("d2", "c")]);
        let params = Rm3Params {
            fb_docs: 1,
            fb_terms: 10,
            original_query_weight: 0.0,
        };
        let wq = rm3_expand(&idx, "b", &params, &Bm25Params::default()).unwrap();
        assert!((wq["a"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((wq["b"] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wq.len(), 2);
    }

    #[test]
    fn empty_initial_retrieval_returns_original() {
        let idx = index(&[("d1", "a"), ("d2", "b")]);
        let wq = rm3_expand(
            &idx,
            "zzz",
            &Rm3Params {
                fb_docs: 1,
                ..Default::default()
            },
            &Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(wq, [("zzz".to_string(), 1.0)].into());
    }

    #[test]
    fn fb_docs_larger_than_corpus_rejected() {
        let idx = index(&[("d1", "a")]);
        assert!(rm3_expand(&idx, "a", &Rm3Params::default(), &Bm25Params::default()).is_err());
    }

    #[test]
    fn lambda_one_search_equals_original_ranking() {
        let idx = index(&[
            ("d1", "a b c"),
            ("d2", "a a d"),
            ("d3", "b e"),
            ("d4", "c c c a"),
        ]);
        let params = Rm3Params {
            fb_docs: 3,
            fb_terms: 5,
            original_query_weight: 1.0,
        };
        let bm = Bm25Params::default();
        let wq = rm3_expand(&idx, "a c", &params, &bm).unwrap();
        let ids =
            |hits: Vec<crate::ranking::Hit>| hits.into_iter().map(|h| h.doc_id).collect::<Vec<_>>();
        assert_eq!(
            ids(search_weighted(&idx, &wq, 10, &bm).unwrap()),
            ids(search(&idx, "a c", 10, &bm))
        );
    }

    // Direct RM1 + interpolation from raw text, independent of postings.
    fn oracle(
        corpus: &[(String, String)],
        query: &str,
        params: &Rm3Params,
        bm: &Bm25Params,
    ) -> BTreeMap<String, f64> {
        let docs: Vec<Vec<&str>> = corpus
            .iter()
            .map(|(_, t)| t.split_whitespace().collect())
            .collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let q: Vec<&str> = query.split_whitespace().collect();
        let mut scored: Vec<(String, f64, usize)> = Vec::new();
        for (i, d) in docs.iter().enumerate() {
            let mut s = 0.0;
            let mut matched = false;
            for t in &q {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                matched = true;
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                s += (1.0 + (n - df + 0.5) / (df + 0.5)).ln() * tf
                    / (tf + bm.k1 * (1.0 - bm.b + bm.b * d.len() as f64 / avgdl));
            }
            if matched {
                scored.push((corpus[i].0.clone(), s, i));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(params.fb_docs);
        let z: f64 = scored.iter().map(|s| s.1.exp()).sum();
        let mut rm1: BTreeMap<String, f64> = BTreeMap::new();
        for (_, s, i) in &scored {
            for w in &docs[*i] {
                *rm1.entry(w.to_string()).or_default() += (s.exp() / z) / docs[*i].len() as f64;
            }
        }
        let mut top: Vec<(String, f64)> = rm1.into_iter().collect();
        top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        top.truncate(params.fb_terms);
        let fz: f64 = top.iter().map(|t| t.1).sum();
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for t in &q {
            *out.entry(t.to_string()).or_default() += params.original_query_weight / q.len() as f64;
        }
        for (t, w) in top {
            *out.entry(t).or_default() += (1.0 - params.original_query_weight) * w / fz;
        }
        out
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let corpus: Vec<(String, String)> = (0..20)
            .map(|i| {
                let len = rng.gen_range(3..15);
                let text: Vec<String> = (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..12)))
                    .collect();
                (format!("d{i:02}"), text.join(" "))
            })
            .collect();
        let pairs: Vec<(&str, &str)> = corpus
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let idx = index(&pairs);
        let bm = Bm25Params::default();
        for trial in 0..10 {
            let query: Vec<String> = (0..rng.gen_range(1..4))
                .map(|_| format!("w{}", rng.gen_range(0..12)))
                .collect();
            let query = query.join(" ");
            let params = Rm3Params {
                fb_docs: rng.gen_range(1..8),
                fb_terms: rng.gen_range(1..12),
                original_query_weight: [0.0, 0.3, 0.5, 0.9][trial % 4],
            };
            let expected = oracle(&corpus, &query, &params, &bm);
            let got = rm3_expand(&idx, &query, &params, &bm).unwrap();
            let expected: BTreeMap<String, f64> =
                expected.into_iter().filter(|(_, w)| *w > 0.0).collect();
            assert_eq!(
                got.keys().collect::<Vec<_>>(),
                expected.keys().collect::<Vec<_>>(),
                "{query}"
            );
            for (t, w) in &got {
                assert!(
                    (w - expected[t]).abs() < 1e-9,
                    "{t}: {w} vs {}",
                    expected[t]
                );
            }
            assert!((got.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

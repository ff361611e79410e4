//! LLM pseudo-document expansion: few-shot prompt rendering, cached
//! generation through a completion endpoint, and the query rewrites for
//! sparse and dense retrieval.

mod cache;
mod client;
mod offline;
mod prompt;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::Query;

pub use cache::{CacheRecord, GenerationCache};
pub use client::{
    completion_text, CallError, CompletionEndpoint, CompletionRequest, GenerationParams,
    HttpCompletionClient, RetryPolicy, API_KEY_ENV,
};
pub use offline::{load_examples, load_offline_expansions, write_expansions, OfflineExpansions};
pub use prompt::{
    prompt_hash, query_seed, render_prompt, sample_examples, ExamplePair, PromptTemplate,
    CHAT_SYSTEM_MESSAGE, DEFAULT_INSTRUCTION,
};

/// Default number of query repetitions in the sparse rewrite.
pub const DEFAULT_QUERY_REPEATS: usize = 5;
/// Literal separating query and pseudo-document in the dense rewrite.
pub const DENSE_SEPARATOR: &str = "[SEP]";

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("example pool has {pool} pairs but the prompt needs {k}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("invalid template: {0}")]
    Template(String),
    #[error("invalid generation parameters: {0}")]
    Params(String),
    #[error("completion failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
    #[error("no pseudo-document for query {0:?}")]
    MissingExpansion(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

/// Generated passage used as expansion material for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoDocument {
    pub query_id: String,
    pub text: String,
    pub model_name: String,
    /// Digest of the rendered prompt; `None` for rows loaded from an
    /// offline expansion file, whose prompts are unknown.
    pub prompt_hash: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
}

impl PseudoDocument {
    pub fn offline(
        query_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, ExpansionError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ExpansionError::EmptyCompletion);
        }
        Ok(PseudoDocument {
            query_id: query_id.into(),
            text,
            model_name: "offline".into(),
            prompt_hash: None,
            created_at: None,
        })
    }
}

/// Returns the pseudo-document for `prompt`, from the cache when possible.
///
/// Misses call `endpoint` under `retry`; the trimmed completion is written
/// through to the cache. Concurrent misses on one key resolve to whichever
/// generation reached the cache first.
pub fn generate_pseudo_doc(
    query_id: &str,
    prompt: &str,
    system_message: Option<&str>,
    params: &GenerationParams,
    endpoint: &dyn CompletionEndpoint,
    cache: &GenerationCache,
    retry: &RetryPolicy,
) -> Result<PseudoDocument, ExpansionError> {
    params.validate().map_err(ExpansionError::Params)?;
    let hash = prompt_hash(prompt);
    let record = match cache.get(&hash, &params.model_name) {
        Some(hit) => hit,
        None => {
            let request = CompletionRequest {
                prompt,
                system_message,
                params,
            };
            let text = retry
                .run(|| endpoint.complete(&request))
                .map_err(|(e, attempts)| ExpansionError::Provider {
                    attempts,
                    message: e.message,
                })?;
            let text = text.trim();
            if text.is_empty() {
                return Err(ExpansionError::EmptyCompletion);
            }
            cache.insert(CacheRecord {
                prompt_hash: hash.clone(),
                model: params.model_name.clone(),
                params: params.clone(),
                text: text.to_string(),
                created_at: Utc::now(),
            })?
        }
    };
    Ok(PseudoDocument {
        query_id: query_id.to_string(),
        text: record.text,
        model_name: record.model,
        prompt_hash: Some(hash),
        created_at: Some(record.created_at),
    })
}

/// Renders and generates pseudo-documents for many queries with at most
/// `max_in_flight` concurrent endpoint calls. Results are in query order.
///
/// After the first provider failure no new queries are started; queries
/// that were never attempted report a provider error with zero attempts.
pub fn generate_batch(
    queries: &[Query],
    template: &PromptTemplate,
    params: &GenerationParams,
    endpoint: &dyn CompletionEndpoint,
    cache: &GenerationCache,
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Vec<Result<PseudoDocument, ExpansionError>> {
    let slots: Vec<Mutex<Option<Result<PseudoDocument, ExpansionError>>>> =
        queries.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let workers = max_in_flight.clamp(1, queries.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(query) = queries.get(i) else { break };
                if failed.load(Ordering::SeqCst) {
                    *slots[i].lock().unwrap() = Some(Err(ExpansionError::Provider {
                        attempts: 0,
                        message: "not attempted after an earlier provider failure".into(),
                    }));
                    continue;
                }
                let result = render_prompt(query, template, params.seed).and_then(|prompt| {
                    generate_pseudo_doc(
                        &query.query_id,
                        &prompt,
                        template.system_message.as_deref(),
                        params,
                        endpoint,
                        cache,
                        retry,
                    )
                });
                if matches!(result, Err(ExpansionError::Provider { .. })) {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// `q` repeated `n` times, then the pseudo-document.
    Sparse,
    /// `q [SEP] d'`
    Dense,
    QueryOnly,
    PseudoOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub text: String,
    pub mode: ExpansionMode,
}

pub fn expand_sparse(query: &Query, pseudo: &PseudoDocument, n: usize) -> ExpandedQuery {
    assert!(n >= 1, "query repeat count must be >= 1");
    let mut text = vec![query.text.as_str(); n].join(" ");
    text.push(' ');
    text.push_str(&pseudo.text);
    ExpandedQuery {
        query_id: query.query_id.clone(),
        text,
        mode: ExpansionMode::Sparse,
    }
}

/// `q [SEP] d'`, with no escaping of a literal `[SEP]` inside `q`.
pub fn expand_dense(query: &Query, pseudo: &PseudoDocument) -> ExpandedQuery {
    ExpandedQuery {
        query_id: query.query_id.clone(),
        text: format!("{} {DENSE_SEPARATOR} {}", query.text, pseudo.text),
        mode: ExpansionMode::Dense,
    }
}

/// Applies one rewrite. `pseudo` may be `None` only for
/// [`ExpansionMode::QueryOnly`].
pub fn expand(
    query: &Query,
    pseudo: Option<&PseudoDocument>,
    mode: ExpansionMode,
    n: usize,
) -> Result<ExpandedQuery, ExpansionError> {
    let need = || pseudo.ok_or_else(|| ExpansionError::MissingExpansion(query.query_id.clone()));
    Ok(match mode {
        ExpansionMode::QueryOnly => ExpandedQuery {
            query_id: query.query_id.clone(),
            text: query.text.clone(),
            mode,
        },
        ExpansionMode::PseudoOnly => ExpandedQuery {
            query_id: query.query_id.clone(),
            text: need()?.text.clone(),
            mode,
        },
        ExpansionMode::Sparse => expand_sparse(query, need()?, n),
        ExpansionMode::Dense => expand_dense(query, need()?),
    })
}

/// All four ablation arms for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionSet {
    pub query_only: ExpandedQuery,
    pub pseudo_only: ExpandedQuery,
    pub sparse: ExpandedQuery,
    pub dense: ExpandedQuery,
}

pub fn expansion_modes(query: &Query, pseudo: &PseudoDocument, n: usize) -> ExpansionSet {
    let arm = |mode| expand(query, Some(pseudo), mode, n).expect("pseudo-document supplied");
    ExpansionSet {
        query_only: arm(ExpansionMode::QueryOnly),
        pseudo_only: arm(ExpansionMode::PseudoOnly),
        sparse: arm(ExpansionMode::Sparse),
        dense: arm(ExpansionMode::Dense),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_analysis::{analyze, AnalyzerConfig};
    use proptest::prelude::*;
    use std::collections::BTreeMap;
    use std::sync::atomic::AtomicU32;
    use std::time::Duration;

    fn pseudo(text: &str) -> PseudoDocument {
        PseudoDocument::offline("q", text).unwrap()
    }

    #[test]
    fn sparse_rewrite_repeats_query() {
        let q = Query::new("q", "a b");
        assert_eq!(expand_sparse(&q, &pseudo("c"), 2).text, "a b a b c");
        assert_eq!(expand_sparse(&q, &pseudo("c"), 1).text, "a b c");
        let five = expand_sparse(&q, &pseudo("c"), DEFAULT_QUERY_REPEATS).text;
        assert!(five.starts_with("a b a b a b a b a b "));
        assert_eq!(five.matches("a b").count(), 5);
    }

    #[test]
    fn dense_rewrite_joins_with_separator() {
        let q = Query::new("q", "a");
        assert_eq!(expand_dense(&q, &pseudo("b")).text, "a [SEP] b");
        let q = Query::new("q", "x [SEP] y");
        assert_eq!(expand_dense(&q, &pseudo("b")).text, "x [SEP] y [SEP] b");
    }

    #[test]
    fn empty_pseudo_document_rejected() {
        assert!(matches!(
            PseudoDocument::offline("q", "  "),
            Err(ExpansionError::EmptyCompletion)
        ));
    }

    #[test]
    fn ablation_arms() {
        let q = Query::new("q", "a b");
        let set = expansion_modes(&q, &pseudo("c d"), 3);
        assert_eq!(set.query_only.text, "a b");
        assert_eq!(set.pseudo_only.text, "c d");
        assert_eq!(set.sparse.text, "a b a b a b c d");
        assert_eq!(set.dense.text, "a b [SEP] c d");
        assert!(expand(&q, None, ExpansionMode::QueryOnly, 5).is_ok());
        assert!(matches!(
            expand(&q, None, ExpansionMode::Sparse, 5),
            Err(ExpansionError::MissingExpansion(_))
        ));
    }

    fn multiset(terms: Vec<String>) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for t in terms {
            *m.entry(t).or_default() += 1;
        }
        m
    }

    proptest! {
        #[test]
        fn sparse_terms_are_n_copies_plus_pseudo(
            q in "[a-zA-Z ]{1,30}",
            d in "[a-zA-Z .,]{1,60}",
            n in 1usize..8,
        ) {
            prop_assume!(!d.trim().is_empty());
            let config = AnalyzerConfig::default();
            let expanded = expand_sparse(&Query::new("q", q.clone()), &pseudo(&d), n);
            let mut expected = multiset(analyze(&d, &config));
            for (t, c) in multiset(analyze(&q, &config)) {
                *expected.entry(t).or_default() += n * c;
            }
            prop_assert_eq!(multiset(analyze(&expanded.text, &config)), expected);
        }

        #[test]
        fn dense_is_plain_concatenation(q in "\\PC{0,30}", d in "\\PC{1,40}") {
            prop_assume!(!d.trim().is_empty());
            let e = expand_dense(&Query::new("q", q.clone()), &pseudo(&d));
            prop_assert_eq!(e.text, format!("{q} [SEP] {d}"));
        }
    }

    struct Scripted {
        calls: AtomicU32,
        fail_first: u32,
        reply: String,
    }

    impl CompletionEndpoint for Scripted {
        fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, CallError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if n <= self.fail_first {
                return Err(CallError::retryable("HTTP 500"));
            }
            Ok(format!("{} ({} chars)", self.reply, req.prompt.len()))
        }
    }

    fn scripted(fail_first: u32, reply: &str) -> Scripted {
        Scripted {
            calls: AtomicU32::new(0),
            fail_first,
            reply: reply.into(),
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            initial_backoff: Duration::from_millis(1),
            ..RetryPolicy::default()
        }
    }

    #[test]
    fn cache_hit_skips_endpoint() {
        let cache = GenerationCache::in_memory();
        let params = GenerationParams::default();
        let endpoint = scripted(0, "  generated");
        let first = generate_pseudo_doc(
            "q1",
            "prompt",
            None,
            &params,
            &endpoint,
            &cache,
            &fast_retry(),
        )
        .unwrap();
        assert_eq!(first.text, "generated (6 chars)");
        let second = generate_pseudo_doc(
            "q1",
            "prompt",
            None,
            &params,
            &endpoint,
            &cache,
            &fast_retry(),
        )
        .unwrap();
        assert_eq!(second.text, first.text);
        assert_eq!(endpoint.calls.load(Ordering::SeqCst), 1);
        assert_eq!(
            second.prompt_hash.as_deref(),
            Some(prompt_hash("prompt").as_str())
        );
    }

    #[test]
    fn cache_is_per_model() {
        let cache = GenerationCache::in_memory();
        let endpoint = scripted(0, "x");
        let a = GenerationParams::default();
        let b = GenerationParams {
            model_name: "gpt-4".into(),
            ..a.clone()
        };
        generate_pseudo_doc("q", "p", None, &a, &endpoint, &cache, &fast_retry()).unwrap();
        generate_pseudo_doc("q", "p", None, &b, &endpoint, &cache, &fast_retry()).unwrap();
        assert_eq!(endpoint.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn exhausted_retries_report_attempts() {
        let cache = GenerationCache::in_memory();
        let endpoint = scripted(u32::MAX, "");
        let err = generate_pseudo_doc(
            "q",
            "p",
            None,
            &GenerationParams::default(),
            &endpoint,
            &cache,
            &fast_retry(),
        )
        .unwrap_err();
        assert!(
            matches!(err, ExpansionError::Provider { attempts: 3, .. }),
            "{err}"
        );
        assert!(cache.is_empty());
    }

    #[test]
    fn empty_completion_is_error() {
        struct Blank;
        impl CompletionEndpoint for Blank {
            fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, CallError> {
                Ok("   \n".into())
            }
        }
        let cache = GenerationCache::in_memory();
        let err = generate_pseudo_doc(
            "q",
            "p",
            None,
            &GenerationParams::default(),
            &Blank,
            &cache,
            &fast_retry(),
        );
        assert!(matches!(err, Err(ExpansionError::EmptyCompletion)));
    }

    #[test]
    fn batch_preserves_order_and_uses_cache() {
        let pool: Vec<ExamplePair> = (0..10)
            .map(|i| ExamplePair::new(format!("q{i}"), format!("p{i}")))
            .collect();
        let template = PromptTemplate::new(pool, 4).unwrap();
        let queries: Vec<Query> = (0..25)
            .map(|i| Query::new(format!("id{i}"), format!("query {i}")))
            .collect();
        let cache = GenerationCache::in_memory();
        let endpoint = scripted(0, "doc");
        let params = GenerationParams::default();
        let out = generate_batch(
            &queries,
            &template,
            &params,
            &endpoint,
            &cache,
            &fast_retry(),
            4,
        );
        assert_eq!(out.len(), 25);
        for (q, r) in queries.iter().zip(&out) {
            assert_eq!(r.as_ref().unwrap().query_id, q.query_id);
        }
        assert_eq!(endpoint.calls.load(Ordering::SeqCst), 25);
        let again = generate_batch(
            &queries,
            &template,
            &params,
            &endpoint,
            &cache,
            &fast_retry(),
            4,
        );
        assert_eq!(endpoint.calls.load(Ordering::SeqCst), 25);
        let texts = |v: &[Result<PseudoDocument, ExpansionError>]| {
            v.iter()
                .map(|r| r.as_ref().unwrap().text.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(texts(&out), texts(&again));
    }

    #[test]
    fn batch_stops_after_provider_failure() {
        let pool: Vec<ExamplePair> = (0..4)
            .map(|i| ExamplePair::new(format!("q{i}"), format!("p{i}")))
            .collect();
        let template = PromptTemplate::new(pool, 4).unwrap();
        let queries: Vec<Query> = (0..10)
            .map(|i| Query::new(format!("id{i}"), format!("query {i}")))
            .collect();
        let endpoint = scripted(u32::MAX, "never");
        let out = generate_batch(
            &queries,
            &template,
            &GenerationParams::default(),
            &endpoint,
            &GenerationCache::in_memory(),
            &fast_retry(),
            1,
        );
        assert_eq!(
            endpoint.calls.load(Ordering::SeqCst),
            3,
            "one query, three attempts"
        );
        assert!(matches!(
            out[0],
            Err(ExpansionError::Provider { attempts: 3, .. })
        ));
        assert!(out[1..]
            .iter()
            .all(|r| matches!(r, Err(ExpansionError::Provider { attempts: 0, .. }))));
    }
}

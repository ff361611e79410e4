//! Ranking metrics over TREC runs and per-query latency measurement.
//!
//! Conventions follow trec_eval: documents are read in rank order, queries
//! missing from the qrels or the run are not evaluated, and nDCG uses
//! linear gain.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Qrels, Query, RunEntry, RunFile};
use crate::ranking::Hit;

pub const DEFAULT_REL_THRESHOLD: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown metric {0:?} (expected MRR@k, R@k or nDCG@k)")]
    UnknownMetric(String),
    #[error("{0}")]
    Invalid(String),
    #[error("query {query_id}: {message}")]
    Pipeline { query_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Mrr(usize),
    Recall(usize),
    Ndcg(usize),
}

/// MRR@10, R@50, R@1000, nDCG@10.
pub const STANDARD_MEASURES: [Measure; 4] = [
    Measure::Mrr(10),
    Measure::Recall(50),
    Measure::Recall(1000),
    Measure::Ndcg(10),
];

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Mrr(k) => write!(f, "MRR@{k}"),
            Measure::Recall(k) => write!(f, "R@{k}"),
            Measure::Ndcg(k) => write!(f, "nDCG@{k}"),
        }
    }
}

impl FromStr for Measure {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || EvalError::UnknownMetric(s.to_string());
        let (name, k) = s.split_once('@').ok_or_else(err)?;
        let k: usize = k.parse().map_err(|_| err())?;
        if k == 0 {
            return Err(err());
        }
        match name.to_ascii_lowercase().as_str() {
            "mrr" => Ok(Measure::Mrr(k)),
            "r" | "recall" => Ok(Measure::Recall(k)),
            "ndcg" => Ok(Measure::Ndcg(k)),
            _ => Err(err()),
        }
    }
}

/// One measure's per-query values and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub measure: Measure,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricScores {
    fn from_values(measure: Measure, per_query: BTreeMap<String, f64>) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        MetricScores {
            measure,
            per_query,
            mean,
        }
    }
}

/// Judged queries present in the run, with their ranked entries.
fn judged_rankings<'a>(
    run: &'a RunFile,
    qrels: &'a Qrels,
) -> impl Iterator<Item = (&'a str, Vec<&'a RunEntry>, &'a BTreeMap<String, u32>)> {
    run.by_query()
        .into_iter()
        .filter_map(move |(qid, ranking)| qrels.for_query(qid).map(|j| (qid, ranking, j)))
}

fn is_relevant(judged: &BTreeMap<String, u32>, doc_id: &str, threshold: u32) -> bool {
    judged.get(doc_id).is_some_and(|g| *g >= threshold)
}

fn relevant_count(judged: &BTreeMap<String, u32>, threshold: u32) -> usize {
    judged.values().filter(|g| **g >= threshold).count()
}

pub fn mrr_at(run: &RunFile, qrels: &Qrels, cutoff: usize, threshold: u32) -> MetricScores {
    let per_query = judged_rankings(run, qrels)
        .filter(|(_, _, judged)| relevant_count(judged, threshold) > 0)
        .map(|(qid, ranking, judged)| {
            let rr = ranking
                .iter()
                .take(cutoff)
                .position(|e| is_relevant(judged, &e.doc_id, threshold))
                .map_or(0.0, |i| 1.0 / (i + 1) as f64);
            (qid.to_string(), rr)
        })
        .collect();
    MetricScores::from_values(Measure::Mrr(cutoff), per_query)
}

pub fn recall_at(run: &RunFile, qrels: &Qrels, cutoff: usize, threshold: u32) -> MetricScores {
    let per_query = judged_rankings(run, qrels)
        .filter_map(|(qid, ranking, judged)| {
            let total = relevant_count(judged, threshold);
            (total > 0).then(|| {
                let found = ranking
                    .iter()
                    .take(cutoff)
                    .filter(|e| is_relevant(judged, &e.doc_id, threshold))
                    .count();
                (qid.to_string(), found as f64 / total as f64)
            })
        })
        .collect();
    MetricScores::from_values(Measure::Recall(cutoff), per_query)
}

fn discount(rank: usize) -> f64 {
    (rank as f64 + 1.0).log2()
}

/// Linear-gain nDCG; grades are used as gains without binarization.
pub fn ndcg_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> MetricScores {
    let per_query = judged_rankings(run, qrels)
        .filter_map(|(qid, ranking, judged)| {
            let mut ideal: Vec<u32> = judged.values().copied().filter(|g| *g > 0).collect();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            let idcg: f64 = ideal
                .iter()
                .take(cutoff)
                .enumerate()
                .map(|(i, g)| *g as f64 / discount(i + 1))
                .sum();
            (idcg > 0.0).then(|| {
                let dcg: f64 = ranking
                    .iter()
                    .take(cutoff)
                    .enumerate()
                    .map(|(i, e)| {
                        judged.get(&e.doc_id).copied().unwrap_or(0) as f64 / discount(i + 1)
                    })
                    .sum();
                (qid.to_string(), dcg / idcg)
            })
        })
        .collect();
    MetricScores::from_values(Measure::Ndcg(cutoff), per_query)
}

pub fn score_measure(
    run: &RunFile,
    qrels: &Qrels,
    measure: Measure,
    threshold: u32,
) -> MetricScores {
    match measure {
        Measure::Mrr(k) => mrr_at(run, qrels, k, threshold),
        Measure::Recall(k) => recall_at(run, qrels, k, threshold),
        Measure::Ndcg(k) => ndcg_at(run, qrels, k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
    /// Queries with at least one evaluated measure.
    pub evaluated_query_count: usize,
    /// Order in which measures were requested, for display.
    pub measures: Vec<String>,
}

pub fn evaluate(
    run: &RunFile,
    qrels: &Qrels,
    measures: &[Measure],
    threshold: u32,
) -> MetricReport {
    let mut per_query: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut aggregate = BTreeMap::new();
    for m in measures {
        let scores = score_measure(run, qrels, *m, threshold);
        let name = m.to_string();
        for (qid, v) in scores.per_query {
            per_query.entry(qid).or_default().insert(name.clone(), v);
        }
        aggregate.insert(name, scores.mean);
    }
    MetricReport {
        evaluated_query_count: per_query.len(),
        per_query,
        aggregate,
        measures: measures.iter().map(Measure::to_string).collect(),
    }
}

impl MetricReport {
    /// Aligned two-column table of aggregate values.
    pub fn to_table(&self) -> String {
        let width = self
            .measures
            .iter()
            .map(String::len)
            .chain(["queries".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        for name in &self.measures {
            let value = self.aggregate.get(name).copied().unwrap_or(0.0);
            writeln!(out, "{name:<width$}  {value:.4}").unwrap();
        }
        writeln!(out, "{:<width$}  {}", "queries", self.evaluated_query_count).unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Expansion,
    IndexSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub phase: Phase,
    pub per_query_ms: Vec<f64>,
    pub mean_ms: f64,
    pub top_k: usize,
}

impl LatencyReport {
    fn new(phase: Phase, per_query_ms: Vec<f64>, top_k: usize) -> Self {
        let mean_ms = if per_query_ms.is_empty() {
            0.0
        } else {
            per_query_ms.iter().sum::<f64>() / per_query_ms.len() as f64
        };
        LatencyReport {
            phase,
            per_query_ms,
            mean_ms,
            top_k,
        }
    }
}

/// Expansion and search latencies measured in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBench {
    pub pipeline: String,
    pub expansion: LatencyReport,
    pub index_search: LatencyReport,
}

/// A retrieval pipeline split into the two timed phases.
pub trait SearchPipeline {
    /// What the expansion phase hands to the search phase.
    type Expanded;

    fn name(&self) -> String;

    fn expand(&self, query: &Query) -> Result<Self::Expanded, String>;

    fn search(&self, expanded: &Self::Expanded, top_k: usize) -> Result<Vec<Hit>, String>;
}

/// Times each phase per query on the calling thread. `warmup` untimed
/// passes over all queries precede `repetitions` timed passes; a query's
/// latency is its mean over the timed passes.
pub fn bench_latency<P: SearchPipeline + ?Sized>(
    pipeline: &P,
    queries: &[Query],
    top_k: usize,
    warmup: usize,
    repetitions: usize,
) -> Result<LatencyBench, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::Invalid("repetitions must be >= 1".into()));
    }
    let fail = |q: &Query, message: String| EvalError::Pipeline {
        query_id: q.query_id.clone(),
        message,
    };
    for _ in 0..warmup {
        for q in queries {
            let text = pipeline.expand(q).map_err(|m| fail(q, m))?;
            pipeline.search(&text, top_k).map_err(|m| fail(q, m))?;
        }
    }
    let mut expansion = vec![0.0; queries.len()];
    let mut search = vec![0.0; queries.len()];
    for _ in 0..repetitions {
        for (i, q) in queries.iter().enumerate() {
            let start = Instant::now();
            let text = pipeline.expand(q).map_err(|m| fail(q, m))?;
            let expanded = Instant::now();
            let hits = pipeline.search(&text, top_k).map_err(|m| fail(q, m))?;
            let done = Instant::now();
            std::hint::black_box(hits);
            expansion[i] += (expanded - start).as_secs_f64() * 1e3;
            search[i] += (done - expanded).as_secs_f64() * 1e3;
        }
    }
    let reps = repetitions as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / reps).collect::<Vec<_>>();
    Ok(LatencyBench {
        pipeline: pipeline.name(),
        expansion: LatencyReport::new(Phase::Expansion, scale(expansion), top_k),
        index_search: LatencyReport::new(Phase::IndexSearch, scale(search), top_k),
    })
}

//! Search modes wired to a retriever, producing TREC runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Query, RunFile};
use crate::dense_retrieval::{
    embed_batch, DenseError, EmbeddingProvider, QueryBudget, VectorIndex,
};
use crate::evaluation::SearchPipeline;
use crate::query_expansion::{
    expand, ExpansionError, ExpansionMode, OfflineExpansions, DEFAULT_QUERY_REPEATS,
};
use crate::ranking::Hit;
use crate::sparse_retrieval::{
    rm3_expand, search, search_weighted, Bm25Params, IndexError, InvertedIndex, Rm3Params,
    WeightedQuery,
};
use crate::text_analysis::AnalyzerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Baseline,
    Rm3,
    Query2docSparse,
    Query2docDense,
    QueryOnly,
    PseudoOnly,
}

impl SearchMode {
    pub const ALL: [SearchMode; 6] = [
        SearchMode::Baseline,
        SearchMode::Rm3,
        SearchMode::Query2docSparse,
        SearchMode::Query2docDense,
        SearchMode::QueryOnly,
        SearchMode::PseudoOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Baseline => "baseline",
            SearchMode::Rm3 => "rm3",
            SearchMode::Query2docSparse => "query2doc-sparse",
            SearchMode::Query2docDense => "query2doc-dense",
            SearchMode::QueryOnly => "query-only",
            SearchMode::PseudoOnly => "pseudo-only",
        }
    }

    pub fn needs_expansions(self) -> bool {
        matches!(
            self,
            SearchMode::Query2docSparse | SearchMode::Query2docDense | SearchMode::PseudoOnly
        )
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SearchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

pub enum Retriever<'a> {
    Sparse {
        index: &'a InvertedIndex,
        bm25: Bm25Params,
        rm3: Rm3Params,
    },
    Dense {
        index: &'a VectorIndex,
        provider: &'a dyn EmbeddingProvider,
        budget: QueryBudget,
        analyzer: AnalyzerConfig,
    },
}

/// Output of the expansion phase.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedQuery {
    Text(String),
    Weighted(WeightedQuery),
}

pub struct Pipeline<'a> {
    mode: SearchMode,
    retriever: Retriever<'a>,
    expansions: Option<&'a OfflineExpansions>,
    repeats: usize,
}

impl<'a> Pipeline<'a> {
    /// Checks that the mode fits the retriever and that expansions are
    /// supplied when the mode needs them.
    pub fn new(
        mode: SearchMode,
        retriever: Retriever<'a>,
        expansions: Option<&'a OfflineExpansions>,
        repeats: usize,
    ) -> Result<Self, PipelineError> {
        if repeats == 0 {
            return Err(PipelineError::Config("n must be >= 1".into()));
        }
        let dense = matches!(retriever, Retriever::Dense { .. });
        match mode {
            SearchMode::Rm3 | SearchMode::Query2docSparse if dense => {
                return Err(PipelineError::Config(format!(
                    "mode {mode} needs a sparse index"
                )));
            }
            SearchMode::Query2docDense if !dense => {
                return Err(PipelineError::Config(format!(
                    "mode {mode} needs a dense index"
                )));
            }
            _ => {}
        }
        if mode.needs_expansions() && expansions.is_none() {
            return Err(PipelineError::Config(format!(
                "mode {mode} needs pseudo-documents"
            )));
        }
        if let Retriever::Sparse { bm25, rm3, .. } = &retriever {
            bm25.validate()?;
            rm3.validate()?;
        }
        Ok(Pipeline {
            mode,
            retriever,
            expansions,
            repeats,
        })
    }

    pub fn sparse(
        mode: SearchMode,
        index: &'a InvertedIndex,
        expansions: Option<&'a OfflineExpansions>,
    ) -> Result<Self, PipelineError> {
        let retriever = Retriever::Sparse {
            index,
            bm25: index.bm25_defaults(),
            rm3: Rm3Params::default(),
        };
        Self::new(mode, retriever, expansions, DEFAULT_QUERY_REPEATS)
    }

    pub fn mode(&self) -> SearchMode {
        self.mode
    }

    /// Query text after the mode's rewrite.
    pub fn query_text(&self, query: &Query) -> Result<String, PipelineError> {
        let pseudo = match (self.mode.needs_expansions(), self.expansions) {
            (true, Some(exp)) => Some(exp.get(&query.query_id)?),
            _ => None,
        };
        let rewrite = match self.mode {
            SearchMode::Baseline | SearchMode::Rm3 | SearchMode::QueryOnly => {
                ExpansionMode::QueryOnly
            }
            SearchMode::Query2docSparse => ExpansionMode::Sparse,
            SearchMode::Query2docDense => ExpansionMode::Dense,
            SearchMode::PseudoOnly => ExpansionMode::PseudoOnly,
        };
        Ok(expand(query, pseudo, rewrite, self.repeats)?.text)
    }

    pub fn prepare(&self, query: &Query) -> Result<PreparedQuery, PipelineError> {
        let text = self.query_text(query)?;
        match (&self.retriever, self.mode) {
            (Retriever::Sparse { index, bm25, rm3 }, SearchMode::Rm3) => Ok(
                PreparedQuery::Weighted(rm3_expand(index, &text, rm3, bm25)?),
            ),
            _ => Ok(PreparedQuery::Text(text)),
        }
    }

    pub fn retrieve(
        &self,
        prepared: &PreparedQuery,
        top_k: usize,
    ) -> Result<Vec<Hit>, PipelineError> {
        match (&self.retriever, prepared) {
            (Retriever::Sparse { index, bm25, .. }, PreparedQuery::Text(text)) => {
                Ok(search(index, text, top_k, bm25))
            }
            (Retriever::Sparse { index, bm25, .. }, PreparedQuery::Weighted(q)) => {
                Ok(search_weighted(index, q, top_k, bm25)?)
            }
            (
                Retriever::Dense {
                    index,
                    provider,
                    budget,
                    analyzer,
                },
                PreparedQuery::Text(text),
            ) => {
                let vec = embed_batch(&[text.as_str()], *provider, *budget, analyzer)?.remove(0);
                Ok(index.search(&vec, top_k)?)
            }
            (Retriever::Dense { .. }, PreparedQuery::Weighted(_)) => Err(PipelineError::Config(
                "weighted queries need a sparse index".into(),
            )),
        }
    }

    /// Ranks every query; the run tag is the mode name.
    pub fn run(&self, queries: &[Query], top_k: usize) -> Result<RunFile, PipelineError> {
        let mut run = RunFile::new();
        for q in queries {
            let hits = self.retrieve(&self.prepare(q)?, top_k)?;
            run.push_ranking(
                &q.query_id,
                hits.iter().map(|h| (h.doc_id.as_str(), h.score)),
                self.mode.as_str(),
            );
        }
        Ok(run)
    }
}

impl SearchPipeline for Pipeline<'_> {
    type Expanded = PreparedQuery;

    fn name(&self) -> String {
        self.mode.to_string()
    }

    fn expand(&self, query: &Query) -> Result<PreparedQuery, String> {
        self.prepare(query).map_err(|e| e.to_string())
    }

    fn search(&self, expanded: &PreparedQuery, top_k: usize) -> Result<Vec<Hit>, String> {
        self.retrieve(expanded, top_k).map_err(|e| e.to_string())
    }
}

//! Tokenization shared by indexing, query processing and dense-query
//! truncation.
//!
//! The chain is: Unicode word segmentation (UAX #29), lowercasing,
//! stopword removal, stemming. Index files embed the [`AnalyzerConfig`]
//! they were built with so queries are always analyzed the same way.

mod porter;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

pub use porter::stem as porter_stem;

/// Lucene's default English stopword set (33 terms).
pub const LUCENE_ENGLISH_STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stemmer {
    None,
    Porter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopwords: BTreeSet<String>,
    pub stemmer: Stemmer,
}

impl Default for AnalyzerConfig {
    /// Lowercase, Lucene English stopwords, Porter stemming.
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            stopwords: LUCENE_ENGLISH_STOPWORDS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            stemmer: Stemmer::Porter,
        }
    }
}

impl AnalyzerConfig {
    /// No lowercasing, no stopwords, no stemming.
    pub fn plain() -> Self {
        AnalyzerConfig {
            lowercase: false,
            stopwords: BTreeSet::new(),
            stemmer: Stemmer::None,
        }
    }

    pub fn with_stopwords_file(mut self, path: &Path) -> std::io::Result<Self> {
        self.stopwords = load_stopwords(path)?;
        Ok(self)
    }

    /// Maps one segmented word to its index term, or `None` when it is a
    /// stopword.
    fn term(&self, word: &str) -> Option<String> {
        let word = if self.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        };
        if self.stopwords.contains(&word) {
            return None;
        }
        let term = match self.stemmer {
            Stemmer::None => word,
            Stemmer::Porter => porter::stem(&word),
        };
        (!term.is_empty()).then_some(term)
    }
}

/// One term per line; blank lines and `#` comments are ignored. Entries
/// are stored as written, and matched against (possibly lowercased) words.
pub fn load_stopwords(path: &Path) -> std::io::Result<BTreeSet<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn analyze(text: &str, config: &AnalyzerConfig) -> Vec<String> {
    text.unicode_words()
        .filter_map(|w| config.term(w))
        .collect()
}

/// Returns the longest prefix of `text` that analyzes to at most
/// `max_terms` terms. Text that already fits is returned whole.
pub fn truncate_to_terms<'a>(text: &'a str, config: &AnalyzerConfig, max_terms: usize) -> &'a str {
    let mut kept = 0;
    for (offset, word) in text.unicode_word_indices() {
        if config.term(word).is_some() {
            if kept == max_terms {
                return &text[..offset];
            }
            kept += 1;
        }
    }
    text
}

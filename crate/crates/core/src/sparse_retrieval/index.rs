use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::corpus_io::Document;
use crate::text_analysis::{analyze, AnalyzerConfig};

use super::{Bm25Params, IndexError};

pub const INDEX_MAGIC: &str = "Q2DIDX1";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// In-memory inverted index with the statistics BM25 needs.
///
/// Terms are numbered in lexicographic order. A forward (per-document)
/// view is derived from the postings for relevance-model feedback; it is
/// not stored on disk.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    pub(crate) terms: Vec<String>,
    pub(crate) term_ids: HashMap<String, u32>,
    pub(crate) postings: Vec<Vec<Posting>>,
    pub(crate) forward: Vec<Vec<(u32, u32)>>,
    pub(crate) doc_lengths: Vec<u32>,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) avg_doc_length: f64,
    pub(crate) analyzer: AnalyzerConfig,
    pub(crate) bm25_defaults: Bm25Params,
}

impl PartialEq for InvertedIndex {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
            && self.postings == other.postings
            && self.doc_lengths == other.doc_lengths
            && self.doc_ids == other.doc_ids
            && self.avg_doc_length.to_bits() == other.avg_doc_length.to_bits()
            && self.analyzer == other.analyzer
            && self.bm25_defaults == other.bm25_defaults
    }
}

/// Accumulates documents one at a time; see [`build_index`].
pub struct IndexBuilder {
    analyzer: AnalyzerConfig,
    bm25_defaults: Bm25Params,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_ids: Vec<String>,
    seen: HashMap<String, u32>,
}

impl IndexBuilder {
    pub fn new(analyzer: AnalyzerConfig) -> Self {
        IndexBuilder {
            analyzer,
            bm25_defaults: Bm25Params::default(),
            postings: BTreeMap::new(),
            doc_lengths: Vec::new(),
            doc_ids: Vec::new(),
            seen: HashMap::new(),
        }
    }

    pub fn bm25_defaults(mut self, params: Bm25Params) -> Self {
        self.bm25_defaults = params;
        self
    }

    pub fn add(&mut self, doc: &Document) -> Result<(), IndexError> {
        let ordinal = u32::try_from(self.doc_ids.len())
            .map_err(|_| IndexError::Invalid("more than u32::MAX documents".into()))?;
        if self.seen.insert(doc.doc_id.clone(), ordinal).is_some() {
            return Err(IndexError::DuplicateDocId(doc.doc_id.clone()));
        }
        let terms = analyze(&doc.text, &self.analyzer);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in terms.iter() {
            *counts.entry(t.clone()).or_default() += 1;
        }
        for (term, tf) in counts {
            self.postings
                .entry(term)
                .or_default()
                .push(Posting { doc: ordinal, tf });
        }
        self.doc_lengths.push(terms.len() as u32);
        self.doc_ids.push(doc.doc_id.clone());
        Ok(())
    }

    pub fn finish(self) -> Result<InvertedIndex, IndexError> {
        if self.doc_ids.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let (terms, postings): (Vec<String>, Vec<Vec<Posting>>) = self.postings.into_iter().unzip();
        Ok(InvertedIndex::assemble(
            terms,
            postings,
            self.doc_lengths,
            self.doc_ids,
            self.analyzer,
            self.bm25_defaults,
        ))
    }
}

pub fn build_index<'a, I>(docs: I, config: &AnalyzerConfig) -> Result<InvertedIndex, IndexError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut builder = IndexBuilder::new(config.clone());
    for doc in docs {
        builder.add(doc)?;
    }
    builder.finish()
}

impl InvertedIndex {
    fn assemble(
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        doc_lengths: Vec<u32>,
        doc_ids: Vec<String>,
        analyzer: AnalyzerConfig,
        bm25_defaults: Bm25Params,
    ) -> Self {
        let term_ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut forward = vec![Vec::new(); doc_lengths.len()];
        for (term_id, list) in postings.iter().enumerate() {
            for p in list {
                forward[p.doc as usize].push((term_id as u32, p.tf));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        InvertedIndex {
            terms,
            term_ids,
            postings,
            forward,
            doc_lengths,
            doc_ids,
            avg_doc_length,
            analyzer,
            bm25_defaults,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, ordinal: u32) -> u32 {
        self.doc_lengths[ordinal as usize]
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn bm25_defaults(&self) -> Bm25Params {
        self.bm25_defaults
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.term_ids
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.postings(term).map_or(0, |p| p.len() as u32)
    }

    pub fn term_freq(&self, term: &str, ordinal: u32) -> u32 {
        self.postings(term)
            .and_then(|list| {
                list.binary_search_by_key(&ordinal, |p| p.doc)
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    /// `(term, tf)` pairs of one document, in term order.
    pub fn doc_terms(&self, ordinal: u32) -> impl Iterator<Item = (&str, u32)> {
        self.forward[ordinal as usize]
            .iter()
            .map(|&(id, tf)| (self.terms[id as usize].as_str(), tf))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(INDEX_MAGIC, INDEX_VERSION);
        e.str(&serde_json::to_string(&self.analyzer).expect("analyzer config serializes"));
        e.f64(self.bm25_defaults.k1);
        e.f64(self.bm25_defaults.b);
        e.len(self.doc_ids.len());
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            e.str(id);
            e.u32(*len);
        }
        e.len(self.terms.len());
        for (term, list) in self.terms.iter().zip(&self.postings) {
            e.str(term);
            e.len(list.len());
            for p in list {
                e.u32(p.doc);
                e.u32(p.tf);
            }
        }
        e.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, IndexError> {
        let (mut d, version) = Decoder::new(data, INDEX_MAGIC)?;
        if version != INDEX_VERSION {
            return Err(CodecError::Version(version).into());
        }
        let analyzer: AnalyzerConfig = serde_json::from_str(&d.str()?)
            .map_err(|e| CodecError::Invalid(format!("analyzer config: {e}")))?;
        let bm25_defaults = Bm25Params {
            k1: d.f64()?,
            b: d.f64()?,
        };
        let n = d.len()?;
        if n == 0 {
            return Err(IndexError::EmptyCorpus);
        }
        let mut doc_ids = Vec::with_capacity(n);
        let mut doc_lengths = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(d.str()?);
            doc_lengths.push(d.u32()?);
        }
        let vocab = d.len()?;
        let mut terms = Vec::with_capacity(vocab);
        let mut postings = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            let term = d.str()?;
            if terms.last().is_some_and(|prev: &String| prev >= &term) {
                return Err(CodecError::Invalid("terms not strictly sorted".into()).into());
            }
            let m = d.len()?;
            let mut list = Vec::with_capacity(m.min(n));
            for _ in 0..m {
                let p = Posting {
                    doc: d.u32()?,
                    tf: d.u32()?,
                };
                let in_order = list.last().is_none_or(|q: &Posting| q.doc < p.doc);
                if p.tf == 0 || p.doc as usize >= n || !in_order {
                    return Err(CodecError::Invalid(format!("bad posting for {term:?}")).into());
                }
                list.push(p);
            }
            terms.push(term);
            postings.push(list);
        }
        d.finish()?;
        Ok(InvertedIndex::assemble(
            terms,
            postings,
            doc_lengths,
            doc_ids,
            analyzer,
            bm25_defaults,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes()).map_err(|e| IndexError::Io(path.to_path_buf(), e))
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let data = fs::read(path).map_err(|e| IndexError::Io(path.to_path_buf(), e))?;
        Self::from_bytes(&data)
    }
}

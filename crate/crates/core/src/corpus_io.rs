//! Readers and writers for the on-disk formats: MS-MARCO style TSV
//! collections and query sets, TREC qrels and TREC run files.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Integrity {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid run: {0}")]
    InvalidRun(String),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn integrity(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CorpusError::Integrity {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

/// A passage of the retrieval corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

/// Graded relevance judgments keyed by query, then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment. Returns `false` (and leaves the existing grade)
    /// when the pair was already judged.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> bool {
        let per_query = self.judgments.entry(query_id.to_string()).or_default();
        if per_query.contains_key(doc_id) {
            return false;
        }
        per_query.insert(doc_id.to_string(), grade);
        true
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

/// Ranked retrieval output in TREC run format.
///
/// Entries are kept in insertion order; [`RunFile::validate`] checks the
/// per-query invariants (contiguous 1-based ranks, non-increasing scores,
/// no repeated documents).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub entries: Vec<RunEntry>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a ranked list for one query, assigning ranks 1..=m.
    pub fn push_ranking<'a, I>(&mut self, query_id: &str, ranking: I, tag: &str)
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        for (i, (doc_id, score)) in ranking.into_iter().enumerate() {
            self.entries.push(RunEntry {
                query_id: query_id.to_string(),
                doc_id: doc_id.to_string(),
                rank: i as u32 + 1,
                score,
                tag: tag.to_string(),
            });
        }
    }

    /// Entries grouped by query id, each group in rank order.
    pub fn by_query(&self) -> BTreeMap<&str, Vec<&RunEntry>> {
        let mut groups: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
        for e in &self.entries {
            groups.entry(e.query_id.as_str()).or_default().push(e);
        }
        for group in groups.values_mut() {
            group.sort_by_key(|e| e.rank);
        }
        groups
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (qid, group) in self.by_query() {
            let mut seen = HashSet::new();
            for (i, e) in group.iter().enumerate() {
                if e.rank != i as u32 + 1 {
                    return Err(CorpusError::InvalidRun(format!(
                        "query {qid}: expected rank {}, found {}",
                        i + 1,
                        e.rank
                    )));
                }
                if !e.score.is_finite() {
                    return Err(CorpusError::InvalidRun(format!(
                        "query {qid}: non-finite score at rank {}",
                        e.rank
                    )));
                }
                if i > 0 && e.score > group[i - 1].score {
                    return Err(CorpusError::InvalidRun(format!(
                        "query {qid}: score increases at rank {}",
                        e.rank
                    )));
                }
                if !seen.insert(e.doc_id.as_str()) {
                    return Err(CorpusError::InvalidRun(format!(
                        "query {qid}: duplicate doc {}",
                        e.doc_id
                    )));
                }
                if e.tag.is_empty() || e.tag.contains(char::is_whitespace) {
                    return Err(CorpusError::InvalidRun(format!(
                        "query {qid}: tag must be a single non-empty token"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CorpusError::io(path, e))
}

/// Streaming reader over a `doc_id<TAB>text` collection.
///
/// Documents are yielded in file order. Blank lines are skipped. Doc id
/// uniqueness is checked as the stream advances, so memory grows with the
/// number of ids but not with passage text.
pub struct CollectionReader<R> {
    path: PathBuf,
    lines: io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    failed: bool,
}

impl<R: BufRead> CollectionReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        CollectionReader {
            path: path.into(),
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for CollectionReader<R> {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(CorpusError::io(&self.path, e)));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let result = parse_id_text_line(&line).map_err(|m| {
                CorpusError::parse(&self.path, self.line_no, format!("collection: {m}"))
            });
            let result = result.and_then(|(id, text)| {
                if !self.seen.insert(id.to_string()) {
                    return Err(CorpusError::integrity(
                        &self.path,
                        self.line_no,
                        format!("duplicate doc_id {id:?}"),
                    ));
                }
                Ok(Document {
                    doc_id: id.to_string(),
                    text: text.to_string(),
                })
            });
            if result.is_err() {
                self.failed = true;
            }
            return Some(result);
        }
    }
}

/// Splits `id<TAB>text`, enforcing exactly two fields with non-empty
/// id and non-blank text.
fn parse_id_text_line(line: &str) -> Result<(&str, &str), String> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 2 {
        return Err(format!(
            "expected 2 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let (id, text) = (fields[0], fields[1]);
    if id.is_empty() {
        return Err("empty identifier".into());
    }
    if text.trim().is_empty() {
        return Err(format!("empty text for {id:?}"));
    }
    Ok((id, text))
}

pub fn load_collection(path: &Path) -> Result<CollectionReader<BufReader<File>>, CorpusError> {
    Ok(CollectionReader::new(open(path)?, path))
}

/// Reads a `query_id<TAB>text` query set.
pub fn load_queries(path: &Path) -> Result<Vec<Query>, CorpusError> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = parse_id_text_line(&line)
            .map_err(|m| CorpusError::parse(path, i + 1, format!("queries: {m}")))?;
        if !seen.insert(id.to_string()) {
            return Err(CorpusError::integrity(
                path,
                i + 1,
                format!("duplicate query_id {id:?}"),
            ));
        }
        queries.push(Query::new(id, text));
    }
    Ok(queries)
}

pub fn parse_qrels<R: BufRead>(reader: R, path: &Path) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(CorpusError::parse(
                path,
                i + 1,
                format!("qrels: expected 4 fields, found {}", fields.len()),
            ));
        }
        let grade: i64 = fields[3].parse().map_err(|_| {
            CorpusError::parse(path, i + 1, format!("qrels: bad grade {:?}", fields[3]))
        })?;
        if grade < 0 {
            return Err(CorpusError::parse(
                path,
                i + 1,
                format!("qrels: negative grade {grade}"),
            ));
        }
        let grade = u32::try_from(grade).map_err(|_| {
            CorpusError::parse(path, i + 1, format!("qrels: grade {grade} out of range"))
        })?;
        if !qrels.insert(fields[0], fields[2], grade) {
            return Err(CorpusError::integrity(
                path,
                i + 1,
                format!("duplicate judgment ({}, {})", fields[0], fields[2]),
            ));
        }
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels, CorpusError> {
    parse_qrels(open(path)?, path)
}

/// One TREC run line. Scores use six decimal places.
pub fn format_run_line(e: &RunEntry) -> String {
    format!(
        "{} Q0 {} {} {:.6} {}",
        e.query_id, e.doc_id, e.rank, e.score, e.tag
    )
}

pub fn write_run_to<W: Write>(run: &RunFile, mut out: W) -> io::Result<()> {
    for e in &run.entries {
        writeln!(out, "{}", format_run_line(e))?;
    }
    out.flush()
}

/// Writes `run` after validating it. Scores are rounded to six decimals
/// on output, so reading the file back yields the rounded scores.
pub fn write_run(run: &RunFile, path: &Path) -> Result<(), CorpusError> {
    run.validate()?;
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_run_to(run, BufWriter::new(file)).map_err(|e| CorpusError::io(path, e))
}

pub fn parse_run<R: BufRead>(reader: R, path: &Path) -> Result<RunFile, CorpusError> {
    let mut run = RunFile::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(CorpusError::parse(
                path,
                i + 1,
                format!("run: expected 6 fields, found {}", fields.len()),
            ));
        }
        let rank: u32 = fields[3].parse().map_err(|_| {
            CorpusError::parse(path, i + 1, format!("run: bad rank {:?}", fields[3]))
        })?;
        let score: f64 = fields[4].parse().map_err(|_| {
            CorpusError::parse(path, i + 1, format!("run: bad score {:?}", fields[4]))
        })?;
        run.entries.push(RunEntry {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<RunFile, CorpusError> {
    parse_run(open(path)?, path)
}

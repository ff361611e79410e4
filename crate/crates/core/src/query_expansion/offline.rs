use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ExamplePair, ExpansionError, PseudoDocument};

/// Pre-generated pseudo-documents keyed by query id.
#[derive(Debug, Clone, Default)]
pub struct OfflineExpansions {
    docs: HashMap<String, PseudoDocument>,
    /// Rows that replaced an earlier row for the same query id.
    pub duplicates: usize,
}

impl OfflineExpansions {
    pub fn get(&self, query_id: &str) -> Result<&PseudoDocument, ExpansionError> {
        self.docs
            .get(query_id)
            .ok_or_else(|| ExpansionError::MissingExpansion(query_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn insert(&mut self, doc: PseudoDocument) {
        if self.docs.insert(doc.query_id.clone(), doc).is_some() {
            self.duplicates += 1;
        }
    }
}

impl FromIterator<PseudoDocument> for OfflineExpansions {
    fn from_iter<T: IntoIterator<Item = PseudoDocument>>(iter: T) -> Self {
        let mut out = OfflineExpansions::default();
        for d in iter {
            out.insert(d);
        }
        out
    }
}

fn read_pairs(
    path: &Path,
    what: &str,
    mut each: impl FnMut(usize, &str, &str) -> Result<(), ExpansionError>,
) -> Result<(), ExpansionError> {
    let file = File::open(path).map_err(|e| ExpansionError::Io(path.to_path_buf(), e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ExpansionError::Io(path.to_path_buf(), e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| ExpansionError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("{what}: {message}"),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(format!(
                "expected 2 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].trim().is_empty() {
            return Err(parse_err("empty field".into()));
        }
        each(i + 1, fields[0], fields[1])?;
    }
    Ok(())
}

/// Reads `query_id<TAB>pseudo_document` rows. A repeated query id replaces
/// the earlier row; the number of replacements is reported in
/// [`OfflineExpansions::duplicates`] and logged.
pub fn load_offline_expansions(path: &Path) -> Result<OfflineExpansions, ExpansionError> {
    let mut out = OfflineExpansions::default();
    read_pairs(path, "expansions", |_, id, text| {
        out.insert(PseudoDocument::offline(id, text)?);
        Ok(())
    })?;
    if out.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate query id(s), later rows kept",
            path.display(),
            out.duplicates
        );
    }
    Ok(out)
}

fn one_line(text: &str) -> String {
    text.split(['\t', '\n', '\r']).collect::<Vec<_>>().join(" ")
}

/// Writes pseudo-documents as `query_id<TAB>text`. Tabs and line breaks
/// inside generated text become spaces.
pub fn write_expansions<'a, I>(path: &Path, docs: I) -> Result<(), ExpansionError>
where
    I: IntoIterator<Item = &'a PseudoDocument>,
{
    let io = |e| ExpansionError::Io(path.to_path_buf(), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for d in docs {
        writeln!(out, "{}\t{}", d.query_id, one_line(&d.text)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a few-shot example pool of `query<TAB>passage` rows.
pub fn load_examples(path: &Path) -> Result<Vec<ExamplePair>, ExpansionError> {
    let mut pool = Vec::new();
    read_pairs(path, "examples", |_, q, p| {
        pool.push(ExamplePair::new(q, p));
        Ok(())
    })?;
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.tsv");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn one_line_one_entry() {
        let (_d, path) = write("q1\tsome passage\n");
        let exp = load_offline_expansions(&path).unwrap();
        assert_eq!(exp.len(), 1);
        assert_eq!(exp.get("q1").unwrap().text, "some passage");
    }

    #[test]
    fn duplicates_last_wins() {
        let (_d, path) = write("q1\told\nq2\tx\nq1\tnew\n");
        let exp = load_offline_expansions(&path).unwrap();
        assert_eq!(exp.get("q1").unwrap().text, "new");
        assert_eq!(exp.duplicates, 1);
    }

    #[test]
    fn missing_lookup_names_query() {
        let (_d, path) = write("q1\tx\n");
        let exp = load_offline_expansions(&path).unwrap();
        match exp.get("q9") {
            Err(ExpansionError::MissingExpansion(id)) => assert_eq!(id, "q9"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_rejected() {
        let (_d, path) = write("q1\tok\nbroken line\n");
        assert!(matches!(
            load_offline_expansions(&path),
            Err(ExpansionError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.tsv");
        let docs = vec![
            PseudoDocument::offline("a", "line one\nline\ttwo").unwrap(),
            PseudoDocument::offline("b", "plain").unwrap(),
        ];
        write_expansions(&path, &docs).unwrap();
        let back = load_offline_expansions(&path).unwrap();
        assert_eq!(back.get("a").unwrap().text, "line one line two");
        assert_eq!(back.get("b").unwrap().text, "plain");
    }
}

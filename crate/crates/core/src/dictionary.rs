//! Consumer-to-clinical mapping dictionary.
//!
//! Source files are CSV with the header
//! `consumer_term,clinical_term,concept_id,source`. Rows are normalized,
//! filtered (exclusion list, token length, optional corpus vocabulary) and
//! deduplicated on the normalized `(consumer, clinical)` pair. Entries are
//! kept sorted by that pair so rebuilding from the same sources always
//! serializes to the same bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{term_tokens, PhraseMatcher};

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("phrase is empty after normalization")]
    EmptyPhrase,
    #[error("cannot read {path}: {source}")]
    Unreadable { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}: {message}")]
    Schema { path: PathBuf, row: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercases, collapses whitespace runs to one space and trims.
pub fn normalize_phrase(raw: &str) -> Result<String, DictionaryError> {
    let lowered = raw.to_lowercase();
    let joined = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        Err(DictionaryError::EmptyPhrase)
    } else {
        Ok(joined)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MappingEntry {
    pub consumer_term: String,
    pub clinical_term: String,
    #[serde(default)]
    pub concept_id: Option<String>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig { min_tokens: 1, max_tokens: 6 }
    }
}

/// Rows dropped by each filter. `rows_read` equals the sum of all drops
/// plus `retained`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub rows_read: usize,
    pub dropped_empty: usize,
    pub dropped_identical: usize,
    pub dropped_excluded: usize,
    pub dropped_length: usize,
    pub dropped_vocabulary: usize,
    pub dropped_duplicate: usize,
    pub retained: usize,
}

impl BuildReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped_empty
            + self.dropped_identical
            + self.dropped_excluded
            + self.dropped_length
            + self.dropped_vocabulary
            + self.dropped_duplicate
    }
}

/// Concept ids and normalized terms whose rows must be dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionList {
    pub concept_ids: BTreeSet<String>,
    pub terms: BTreeSet<String>,
}

impl ExclusionList {
    /// One entry per line; blank lines and `#` comments are ignored. Each
    /// entry is checked both as a concept id and as a normalized term.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, DictionaryError> {
        let mut out = ExclusionList::default();
        for line in reader.lines() {
            let line = line?;
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            out.concept_ids.insert(entry.to_string());
            if let Ok(term) = normalize_phrase(entry) {
                out.terms.insert(term);
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        let file =
            File::open(path).map_err(|source| DictionaryError::Unreadable { path: path.to_path_buf(), source })?;
        Self::parse(BufReader::new(file))
    }

    fn excludes(&self, consumer: &str, clinical: &str, concept_id: Option<&str>) -> bool {
        concept_id.is_some_and(|id| self.concept_ids.contains(id))
            || self.terms.contains(consumer)
            || self.terms.contains(clinical)
    }
}

/// An unnormalized mapping row as read from a source file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SourceRow {
    pub consumer_term: String,
    pub clinical_term: String,
    #[serde(default)]
    pub concept_id: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

/// Reads mapping rows from CSV. Row numbers in errors count the header as
/// row 1.
pub fn read_source_rows<R: Read>(reader: R, label: &Path) -> Result<Vec<SourceRow>, DictionaryError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DictionaryError::Schema { path: label.to_path_buf(), row: 1, message: e.to_string() })?
        .clone();
    for required in ["consumer_term", "clinical_term"] {
        if !headers.iter().any(|h| h.trim() == required) {
            return Err(DictionaryError::Schema {
                path: label.to_path_buf(),
                row: 1,
                message: format!("missing column {required}"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.deserialize::<SourceRow>().enumerate() {
        let row = record.map_err(|e| DictionaryError::Schema {
            path: label.to_path_buf(),
            row: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_source(path: &Path) -> Result<Vec<SourceRow>, DictionaryError> {
    let file = File::open(path).map_err(|source| DictionaryError::Unreadable { path: path.to_path_buf(), source })?;
    read_source_rows(BufReader::new(file), path)
}

/// Applies normalization, filters and deduplication to raw rows.
pub fn build_entries(
    rows: &[SourceRow],
    exclusions: &ExclusionList,
    corpus_vocab: Option<&BTreeSet<String>>,
    config: &DictionaryConfig,
) -> (Vec<MappingEntry>, BuildReport) {
    let mut report = BuildReport { rows_read: rows.len(), ..Default::default() };
    let mut kept: BTreeMap<(String, String), MappingEntry> = BTreeMap::new();

    for row in rows {
        let (consumer, clinical) = match (normalize_phrase(&row.consumer_term), normalize_phrase(&row.clinical_term)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                report.dropped_empty += 1;
                continue;
            }
        };
        if consumer == clinical {
            report.dropped_identical += 1;
            continue;
        }
        let concept_id = row.concept_id.as_deref().map(str::trim).filter(|s| !s.is_empty());
        if exclusions.excludes(&consumer, &clinical, concept_id) {
            report.dropped_excluded += 1;
            continue;
        }
        let consumer_tokens = term_tokens(&consumer);
        let clinical_tokens = term_tokens(&clinical);
        let in_range = |n: usize| n >= config.min_tokens.max(1) && n <= config.max_tokens;
        if !in_range(consumer_tokens.len()) || !in_range(clinical_tokens.len()) {
            report.dropped_length += 1;
            continue;
        }
        if let Some(vocab) = corpus_vocab {
            if !consumer_tokens.iter().chain(&clinical_tokens).all(|t| vocab.contains(t)) {
                report.dropped_vocabulary += 1;
                continue;
            }
        }
        let key = (consumer.clone(), clinical.clone());
        if kept.contains_key(&key) {
            report.dropped_duplicate += 1;
            continue;
        }
        kept.insert(
            key,
            MappingEntry {
                consumer_term: consumer,
                clinical_term: clinical,
                concept_id: concept_id.map(str::to_string),
                source: row.source.as_deref().map(str::trim).unwrap_or_default().to_string(),
            },
        );
    }
    report.retained = kept.len();
    (kept.into_values().collect(), report)
}

/// The mapping dictionary plus compiled matchers for both sides.
#[derive(Debug, Clone)]
pub struct TermDictionary {
    entries: Vec<MappingEntry>,
    consumer_index: BTreeMap<String, Vec<String>>,
    clinical_terms: BTreeSet<String>,
    consumer_matcher: PhraseMatcher,
    clinical_matcher: PhraseMatcher,
}

impl TermDictionary {
    /// Wraps entries (sorted and deduplicated here) and compiles matchers.
    /// `token_freq`, when given, drives the anchor-token choice.
    pub fn from_entries(mut entries: Vec<MappingEntry>, token_freq: Option<&HashMap<String, u64>>) -> Self {
        entries.sort();
        entries.dedup_by(|a, b| a.consumer_term == b.consumer_term && a.clinical_term == b.clinical_term);
        let mut consumer_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut clinical_terms = BTreeSet::new();
        for e in &entries {
            consumer_index.entry(e.consumer_term.clone()).or_default().push(e.clinical_term.clone());
            clinical_terms.insert(e.clinical_term.clone());
        }
        let (consumer_matcher, clinical_matcher) = match token_freq {
            Some(freq) => (
                PhraseMatcher::with_token_frequencies(consumer_index.keys(), freq),
                PhraseMatcher::with_token_frequencies(&clinical_terms, freq),
            ),
            None => (PhraseMatcher::new(consumer_index.keys()), PhraseMatcher::new(&clinical_terms)),
        };
        TermDictionary { entries, consumer_index, clinical_terms, consumer_matcher, clinical_matcher }
    }

    /// Reads every source, applies filters and compiles the dictionary.
    pub fn build(
        sources: &[PathBuf],
        exclusions: &ExclusionList,
        corpus_vocab: Option<&BTreeSet<String>>,
        config: &DictionaryConfig,
    ) -> Result<(TermDictionary, BuildReport), DictionaryError> {
        let mut rows = Vec::new();
        for path in sources {
            rows.extend(load_source(path)?);
        }
        let (entries, report) = build_entries(&rows, exclusions, corpus_vocab, config);
        Ok((TermDictionary::from_entries(entries, None), report))
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Clinical targets of a consumer term, sorted.
    pub fn clinical_for(&self, consumer: &str) -> &[String] {
        self.consumer_index.get(consumer).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn consumer_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.consumer_index
    }

    pub fn consumer_terms(&self) -> impl Iterator<Item = &String> {
        self.consumer_index.keys()
    }

    pub fn clinical_terms(&self) -> &BTreeSet<String> {
        &self.clinical_terms
    }

    pub fn consumer_matcher(&self) -> &PhraseMatcher {
        &self.consumer_matcher
    }

    pub fn clinical_matcher(&self) -> &PhraseMatcher {
        &self.clinical_matcher
    }

    /// Recompiles matchers with anchor tokens chosen by `token_freq`.
    pub fn with_token_frequencies(&self, token_freq: &HashMap<String, u64>) -> TermDictionary {
        TermDictionary::from_entries(self.entries.clone(), Some(token_freq))
    }

    /// Serializes entries as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a JSONL cache written by [`TermDictionary::write_jsonl`].
    /// Entries must already satisfy the normalization invariants.
    pub fn read_jsonl<R: BufRead>(reader: R, label: &Path) -> Result<TermDictionary, DictionaryError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let schema = |message: String| DictionaryError::Schema { path: label.to_path_buf(), row: i + 1, message };
            let e: MappingEntry = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
            for term in [&e.consumer_term, &e.clinical_term] {
                match normalize_phrase(term) {
                    Ok(n) if &n == term => {}
                    _ => return Err(schema(format!("term {term:?} is not normalized"))),
                }
            }
            if e.consumer_term == e.clinical_term {
                return Err(schema("consumer and clinical terms are identical".into()));
            }
            entries.push(e);
        }
        Ok(TermDictionary::from_entries(entries, None))
    }

    pub fn load_jsonl(path: &Path) -> Result<TermDictionary, DictionaryError> {
        let file =
            File::open(path).map_err(|source| DictionaryError::Unreadable { path: path.to_path_buf(), source })?;
        Self::read_jsonl(BufReader::new(file), path)
    }
}

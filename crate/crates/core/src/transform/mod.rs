//! Dictionary-confirmed consumer-to-clinical substitution events.
//!
//! An event fires for a mapping `consumer -> clinical` in one note-section
//! when the consumer term is present in the draft and absent from the final
//! text, and the clinical term is absent from the draft and present in the
//! final text. Conditions are presence based, so a section yields at most
//! one event per mapping.

pub mod stem;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{NoteSection, SectionLabel};
use crate::dictionary::TermDictionary;
use crate::frequency::{section_delta, SectionDelta};
use crate::matcher::term_tokens;

const BUNDLED_STOP_WORDS: &str = include_str!("../../data/stopwords.txt");

/// Parses a stop list: one word per line, `#` comments and blanks ignored.
pub fn parse_stop_words<R: BufRead>(reader: R) -> std::io::Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() && !w.starts_with('#') {
            out.insert(w.to_lowercase());
        }
    }
    Ok(out)
}

pub fn bundled_stop_words() -> BTreeSet<String> {
    parse_stop_words(BUNDLED_STOP_WORDS.as_bytes()).expect("bundled stop list is valid")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterConfig {
    /// Terms with fewer characters are excluded.
    pub min_term_chars: usize,
    /// Apply `min_term_chars` to clinical terms too (consumer side only by
    /// default, since short clinical abbreviations are legitimate targets).
    pub min_length_both_sides: bool,
    pub stop_words: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_term_chars: 4, min_length_both_sides: false, stop_words: bundled_stop_words() }
    }
}

impl FilterConfig {
    pub fn with_stop_list(mut self, path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        self.stop_words = parse_stop_words(std::io::BufReader::new(file))?;
        Ok(self)
    }

    fn too_short(&self, term: &str) -> bool {
        term.chars().count() < self.min_term_chars
    }

    /// Detection-time gate on a mapping.
    pub fn admits(&self, consumer: &str, clinical: &str) -> bool {
        !(self.too_short(consumer)
            || (self.min_length_both_sides && self.too_short(clinical))
            || self.stop_words.contains(consumer)
            || self.stop_words.contains(clinical))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransformationEvent {
    pub note_id: String,
    pub section: SectionLabel,
    pub consumer_term: String,
    pub clinical_term: String,
}

/// Events for one section from its precomputed delta, sorted by pair.
pub fn detect_from_delta(
    delta: &SectionDelta,
    dict: &TermDictionary,
    config: &FilterConfig,
) -> Vec<TransformationEvent> {
    let introduced: BTreeSet<&String> = delta.clinical.introduced_terms().collect();
    let mut events = Vec::new();
    if introduced.is_empty() {
        return events;
    }
    for consumer in delta.consumer.removed_terms() {
        for clinical in dict.clinical_for(consumer) {
            if introduced.contains(clinical) && config.admits(consumer, clinical) {
                events.push(TransformationEvent {
                    note_id: delta.note_id.clone(),
                    section: delta.section,
                    consumer_term: consumer.clone(),
                    clinical_term: clinical.clone(),
                });
            }
        }
    }
    events.sort();
    let before = events.len();
    events.dedup();
    assert_eq!(before, events.len(), "presence rule admits one event per pair and section");
    events
}

pub fn detect_events(section: &NoteSection, dict: &TermDictionary, config: &FilterConfig) -> Vec<TransformationEvent> {
    detect_from_delta(&section_delta(section, dict), dict, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    SameStem,
    ShortTerm,
    StopWord,
}

/// Why a pair fails the post-hoc linguistic filter, if it does.
pub fn filter_reason(consumer: &str, clinical: &str, config: &FilterConfig) -> Option<FilterReason> {
    let a = term_tokens(consumer);
    let b = term_tokens(clinical);
    if !a.is_empty() && a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| stem::stem(x) == stem::stem(y)) {
        return Some(FilterReason::SameStem);
    }
    if config.too_short(consumer) || (config.min_length_both_sides && config.too_short(clinical)) {
        return Some(FilterReason::ShortTerm);
    }
    if config.stop_words.contains(consumer) || config.stop_words.contains(clinical) {
        return Some(FilterReason::StopWord);
    }
    None
}

/// Pairs surviving the same-stem, length and stop-word filter, in input
/// order.
pub fn linguistic_filter(pairs: &[(String, String)], config: &FilterConfig) -> Vec<(String, String)> {
    pairs.iter().filter(|(c, k)| filter_reason(c, k, config).is_none()).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSummary {
    pub consumer_term: String,
    pub clinical_term: String,
    pub event_count: u64,
    pub distinct_sections: u64,
    pub survived_linguistic_filter: bool,
    pub meets_relevance_threshold: bool,
}

impl PairSummary {
    pub fn is_reportable(&self) -> bool {
        self.survived_linguistic_filter && self.meets_relevance_threshold
    }
}

/// Pair-level rollup. The threshold is strict: a pair needs more than
/// `threshold` distinct sections. Sorted by event count descending, then
/// pair ascending.
pub fn summarize_pairs(events: &[TransformationEvent], threshold: u64, config: &FilterConfig) -> Vec<PairSummary> {
    type Tally<'a> = (u64, BTreeSet<(&'a str, SectionLabel)>);
    let mut counts: BTreeMap<(&str, &str), Tally> = BTreeMap::new();
    for e in events {
        let entry = counts.entry((e.consumer_term.as_str(), e.clinical_term.as_str())).or_default();
        entry.0 += 1;
        entry.1.insert((e.note_id.as_str(), e.section));
    }
    let mut out: Vec<PairSummary> = counts
        .into_iter()
        .map(|((c, k), (n, sections))| {
            let distinct = sections.len() as u64;
            debug_assert!(distinct <= n);
            PairSummary {
                consumer_term: c.to_string(),
                clinical_term: k.to_string(),
                event_count: n,
                distinct_sections: distinct,
                survived_linguistic_filter: filter_reason(c, k, config).is_none(),
                meets_relevance_threshold: distinct > threshold,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.event_count
            .cmp(&a.event_count)
            .then_with(|| (&a.consumer_term, &a.clinical_term).cmp(&(&b.consumer_term, &b.clinical_term)))
    });
    out
}

/// Confirmed events as a fraction of all consumer-term deletions.
pub fn substitution_share(event_count: u64, consumer_deleted: u64) -> Option<f64> {
    if consumer_deleted == 0 {
        None
    } else {
        Some(event_count as f64 / consumer_deleted as f64)
    }
}

/// Share of events by section type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionShare {
    pub section: SectionLabel,
    pub events: u64,
    pub pct_of_events: Option<f64>,
    pub sections_with_events: u64,
}

pub fn section_distribution(events: &[TransformationEvent]) -> Vec<SectionShare> {
    let total = events.len() as u64;
    let mut by_label: BTreeMap<SectionLabel, (u64, BTreeSet<&str>)> = BTreeMap::new();
    for e in events {
        let entry = by_label.entry(e.section).or_default();
        entry.0 += 1;
        entry.1.insert(e.note_id.as_str());
    }
    let mut labels: Vec<SectionLabel> = SectionLabel::ANALYZED.to_vec();
    if by_label.contains_key(&SectionLabel::Other) {
        labels.push(SectionLabel::Other);
    }
    labels
        .into_iter()
        .map(|label| {
            let (events, notes) = by_label.remove(&label).unwrap_or_default();
            SectionShare {
                section: label,
                events,
                pct_of_events: (total > 0).then(|| events as f64 / total as f64 * 100.0),
                sections_with_events: notes.len() as u64,
            }
        })
        .collect()
}

/// Headline counts for a detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub sections_total: u64,
    pub events: u64,
    pub sections_with_events: u64,
    pub unique_pairs: u64,
    pub pairs_after_filter: u64,
    pub reportable_pairs: u64,
    pub reportable_events: u64,
    pub consumer_deleted: u64,
    pub substitution_share: Option<f64>,
}

pub fn summarize_run(
    events: &[TransformationEvent],
    pairs: &[PairSummary],
    deltas: &[SectionDelta],
) -> TransformSummary {
    let sections: BTreeSet<(&str, SectionLabel)> = events.iter().map(|e| (e.note_id.as_str(), e.section)).collect();
    let consumer_deleted: u64 = deltas.iter().map(|d| d.consumer.deleted).sum();
    TransformSummary {
        sections_total: deltas.len() as u64,
        events: events.len() as u64,
        sections_with_events: sections.len() as u64,
        unique_pairs: pairs.len() as u64,
        pairs_after_filter: pairs.iter().filter(|p| p.survived_linguistic_filter).count() as u64,
        reportable_pairs: pairs.iter().filter(|p| p.is_reportable()).count() as u64,
        reportable_events: pairs.iter().filter(|p| p.is_reportable()).map(|p| p.event_count).sum(),
        consumer_deleted,
        substitution_share: substitution_share(events.len() as u64, consumer_deleted),
    }
}

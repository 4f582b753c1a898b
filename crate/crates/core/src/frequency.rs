//! Draft/final occurrence accounting at section, note and corpus level.
//!
//! Accounting is occurrence-level: for a term counted `d` times in the draft
//! and `f` times in the final text, `min(d, f)` occurrences are kept,
//! `max(d - f, 0)` deleted and `max(f - d, 0)` added.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, NoteSection, SectionLabel};
use crate::dictionary::TermDictionary;
use crate::exec::{map_ordered, Parallelism};
use crate::matcher::{tokenize, TermCounts};

/// Accounting for one side of the dictionary (consumer or clinical).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideDelta {
    pub draft: TermCounts,
    #[serde(rename = "final")]
    pub final_: TermCounts,
    pub change: i64,
    pub deleted: u64,
    pub added: u64,
    pub kept: u64,
    pub deleted_terms: BTreeSet<String>,
    pub added_terms: BTreeSet<String>,
    pub kept_terms: BTreeSet<String>,
}

impl SideDelta {
    pub fn from_counts(draft: TermCounts, final_: TermCounts) -> SideDelta {
        let mut out = SideDelta { change: final_.total as i64 - draft.total as i64, ..Default::default() };
        let terms: BTreeSet<&String> = draft.per_term.keys().chain(final_.per_term.keys()).collect();
        for term in terms {
            let d = draft.get(term);
            let f = final_.get(term);
            out.kept += d.min(f);
            if d > f {
                out.deleted += d - f;
                out.deleted_terms.insert(term.clone());
            } else if f > d {
                out.added += f - d;
                out.added_terms.insert(term.clone());
            }
            if d.min(f) > 0 {
                out.kept_terms.insert(term.clone());
            }
        }
        out.draft = draft;
        out.final_ = final_;
        out.check_identities();
        out
    }

    fn check_identities(&self) {
        assert_eq!(self.kept + self.deleted, self.draft.total, "kept + deleted must equal draft total");
        assert_eq!(self.kept + self.added, self.final_.total, "kept + added must equal final total");
        assert_eq!(self.change, self.added as i64 - self.deleted as i64, "change must equal added - deleted");
    }

    /// Terms present in the draft and absent from the final text.
    pub fn removed_terms(&self) -> impl Iterator<Item = &String> {
        self.deleted_terms.iter().filter(|t| !self.final_.contains(t))
    }

    /// Terms absent from the draft and present in the final text.
    pub fn introduced_terms(&self) -> impl Iterator<Item = &String> {
        self.added_terms.iter().filter(|t| !self.draft.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDelta {
    pub note_id: String,
    pub section: SectionLabel,
    pub clinician_id: String,
    pub consumer: SideDelta,
    pub clinical: SideDelta,
}

impl SectionDelta {
    pub fn consumer_change(&self) -> i64 {
        self.consumer.change
    }

    pub fn clinical_change(&self) -> i64 {
        self.clinical.change
    }
}

/// Counts both dictionary sides on both texts of one section.
pub fn section_delta(section: &NoteSection, dict: &TermDictionary) -> SectionDelta {
    let draft = tokenize(&section.draft_text);
    let final_ = tokenize(&section.final_text);
    let consumer = SideDelta::from_counts(
        dict.consumer_matcher().count_tokens(&draft),
        dict.consumer_matcher().count_tokens(&final_),
    );
    let clinical = SideDelta::from_counts(
        dict.clinical_matcher().count_tokens(&draft),
        dict.clinical_matcher().count_tokens(&final_),
    );
    SectionDelta {
        note_id: section.note_id.clone(),
        section: section.section,
        clinician_id: section.clinician_id.clone(),
        consumer,
        clinical,
    }
}

/// Deltas for every section of the corpus, in corpus order.
pub fn corpus_deltas(corpus: &Corpus, dict: &TermDictionary, mode: Parallelism) -> Vec<SectionDelta> {
    map_ordered(corpus.sections(), mode, |s| section_delta(s, dict))
}

/// Per-note totals on one dictionary side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSide {
    pub draft_total: u64,
    pub final_total: u64,
    pub change: i64,
    pub draft_unique: u64,
    pub final_unique: u64,
    pub unique_change: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteChange {
    pub note_id: String,
    pub clinician_id: String,
    pub sections: usize,
    pub consumer: NoteSide,
    pub clinical: NoteSide,
}

fn note_side<'a>(sides: impl Iterator<Item = &'a SideDelta> + Clone) -> NoteSide {
    let draft_total: u64 = sides.clone().map(|s| s.draft.total).sum();
    let final_total: u64 = sides.clone().map(|s| s.final_.total).sum();
    let change: i64 = sides.clone().map(|s| s.change).sum();
    let draft_terms: BTreeSet<&String> = sides.clone().flat_map(|s| s.draft.per_term.keys()).collect();
    let final_terms: BTreeSet<&String> = sides.flat_map(|s| s.final_.per_term.keys()).collect();
    NoteSide {
        draft_total,
        final_total,
        change,
        draft_unique: draft_terms.len() as u64,
        final_unique: final_terms.len() as u64,
        unique_change: final_terms.len() as i64 - draft_terms.len() as i64,
    }
}

/// Rolls section deltas up to notes, ordered by note id. Unique counts use
/// the union of terms across a note's sections.
pub fn aggregate_notes(deltas: &[SectionDelta]) -> Vec<NoteChange> {
    let mut by_note: BTreeMap<&str, Vec<&SectionDelta>> = BTreeMap::new();
    for d in deltas {
        by_note.entry(d.note_id.as_str()).or_default().push(d);
    }
    by_note
        .into_iter()
        .map(|(note_id, ds)| NoteChange {
            note_id: note_id.to_string(),
            clinician_id: ds[0].clinician_id.clone(),
            sections: ds.len(),
            consumer: note_side(ds.iter().map(|d| &d.consumer)),
            clinical: note_side(ds.iter().map(|d| &d.clinical)),
        })
        .collect()
}

/// Raw per-section-type sums feeding [`SectionMetrics`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTotals {
    pub sections: u64,
    pub consumer_deleted: u64,
    pub consumer_added: u64,
    pub consumer_kept: u64,
    pub clinical_added: u64,
    pub clinical_kept: u64,
}

impl SectionTotals {
    pub fn add(&mut self, d: &SectionDelta) {
        self.sections += 1;
        self.consumer_deleted += d.consumer.deleted;
        self.consumer_added += d.consumer.added;
        self.consumer_kept += d.consumer.kept;
        self.clinical_added += d.clinical.added;
        self.clinical_kept += d.clinical.kept;
    }
}

/// One row of the section editing-intensity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionMetrics {
    pub section: SectionLabel,
    pub totals: SectionTotals,
    pub consumer_deleted_mean: f64,
    pub consumer_added_mean: f64,
    pub clinical_added_mean: f64,
    /// deleted / (deleted + kept) * 100; 0 when nothing was present.
    pub consumer_deletion_pct: f64,
    pub net_consumer_change_mean: f64,
}

impl SectionMetrics {
    /// Returns `None` for an empty group.
    pub fn from_totals(section: SectionLabel, totals: SectionTotals) -> Option<SectionMetrics> {
        if totals.sections == 0 {
            return None;
        }
        let n = totals.sections as f64;
        let present = totals.consumer_deleted + totals.consumer_kept;
        let consumer_deletion_pct =
            if present == 0 { 0.0 } else { totals.consumer_deleted as f64 / present as f64 * 100.0 };
        Some(SectionMetrics {
            section,
            totals,
            consumer_deleted_mean: totals.consumer_deleted as f64 / n,
            consumer_added_mean: totals.consumer_added as f64 / n,
            clinical_added_mean: totals.clinical_added as f64 / n,
            consumer_deletion_pct,
            net_consumer_change_mean: (totals.consumer_added as f64 - totals.consumer_deleted as f64) / n,
        })
    }
}

/// Section-type table over the four analyzed section types. Empty groups
/// are omitted and named in the returned warnings.
pub fn section_table(deltas: &[SectionDelta]) -> (Vec<SectionMetrics>, Vec<String>) {
    let mut totals: BTreeMap<SectionLabel, SectionTotals> = BTreeMap::new();
    for d in deltas.iter().filter(|d| d.section.is_analyzed()) {
        totals.entry(d.section).or_default().add(d);
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for label in SectionLabel::ANALYZED {
        match SectionMetrics::from_totals(label, totals.get(&label).copied().unwrap_or_default()) {
            Some(row) => rows.push(row),
            None => {
                let msg = format!("no {} sections; row omitted", label.display_name());
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    (rows, warnings)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub draft_total: u64,
    pub final_total: u64,
    pub draft_unique: u64,
    pub final_unique: u64,
}

impl SideSummary {
    pub fn total_change(&self) -> i64 {
        self.final_total as i64 - self.draft_total as i64
    }

    pub fn unique_change(&self) -> i64 {
        self.final_unique as i64 - self.draft_unique as i64
    }

    pub fn total_change_pct(&self) -> Option<f64> {
        percent_change(self.draft_total, self.final_total)
    }

    pub fn unique_change_pct(&self) -> Option<f64> {
        percent_change(self.draft_unique, self.final_unique)
    }
}

/// `(final - draft) / draft * 100`, undefined for a zero draft.
pub fn percent_change(draft: u64, final_: u64) -> Option<f64> {
    if draft == 0 {
        None
    } else {
        Some((final_ as f64 - draft as f64) / draft as f64 * 100.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub sections: usize,
    pub notes: usize,
    pub consumer: SideSummary,
    pub clinical: SideSummary,
}

fn side_summary<'a>(sides: impl Iterator<Item = &'a SideDelta>) -> SideSummary {
    let mut out = SideSummary::default();
    let mut draft_terms: BTreeSet<&String> = BTreeSet::new();
    let mut final_terms: BTreeSet<&String> = BTreeSet::new();
    for s in sides {
        out.draft_total += s.draft.total;
        out.final_total += s.final_.total;
        draft_terms.extend(s.draft.per_term.keys());
        final_terms.extend(s.final_.per_term.keys());
    }
    out.draft_unique = draft_terms.len() as u64;
    out.final_unique = final_terms.len() as u64;
    out
}

/// Corpus totals from precomputed section deltas (all section types).
pub fn summarize_deltas(deltas: &[SectionDelta]) -> CorpusSummary {
    let notes: BTreeSet<&str> = deltas.iter().map(|d| d.note_id.as_str()).collect();
    CorpusSummary {
        sections: deltas.len(),
        notes: notes.len(),
        consumer: side_summary(deltas.iter().map(|d| &d.consumer)),
        clinical: side_summary(deltas.iter().map(|d| &d.clinical)),
    }
}

pub fn corpus_summary(corpus: &Corpus, dict: &TermDictionary, mode: Parallelism) -> CorpusSummary {
    summarize_deltas(&corpus_deltas(corpus, dict, mode))
}

/// Formats a percentage to one decimal, or `n/a`.
pub fn format_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}"),
        None => "n/a".to_string(),
    }
}

//! Annotated draft/final section diff.
//!
//! Every matched term occurrence is tagged. Per term, the first
//! `min(draft, final)` occurrences on each side are "kept"; the remaining
//! draft occurrences are "deleted" and the remaining final occurrences
//! "added". Tag counts therefore agree with [`SectionDelta`] by
//! construction.
//!
//! [`SectionDelta`]: crate::frequency::SectionDelta

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{NoteSection, Side};
use crate::dictionary::TermDictionary;
use crate::matcher::{tokenize, PhraseMatcher, TermMatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ConsumerDeleted,
    ConsumerKept,
    ConsumerAdded,
    ClinicalDeleted,
    ClinicalKept,
    ClinicalAdded,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::ConsumerDeleted,
        Category::ConsumerAdded,
        Category::ConsumerKept,
        Category::ClinicalDeleted,
        Category::ClinicalAdded,
        Category::ClinicalKept,
    ];

    pub fn css_class(self) -> &'static str {
        match self {
            Category::ConsumerDeleted => "consumer-deleted",
            Category::ConsumerKept => "consumer-kept",
            Category::ConsumerAdded => "consumer-added",
            Category::ClinicalDeleted => "clinical-deleted",
            Category::ClinicalKept => "clinical-kept",
            Category::ClinicalAdded => "clinical-added",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::ConsumerDeleted => "consumer deleted",
            Category::ConsumerKept => "consumer kept",
            Category::ConsumerAdded => "consumer added",
            Category::ClinicalDeleted => "clinical deleted",
            Category::ClinicalKept => "clinical kept",
            Category::ClinicalAdded => "clinical added",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSpan {
    pub side: Side,
    pub category: Category,
    pub term: String,
    pub start: usize,
    pub end: usize,
}

/// Occurrence counts per category. `*_kept` counts pairs of kept
/// occurrences once, not once per side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCounts {
    pub consumer_deleted: u64,
    pub consumer_kept: u64,
    pub consumer_added: u64,
    pub clinical_deleted: u64,
    pub clinical_kept: u64,
    pub clinical_added: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDiff {
    pub note_id: String,
    pub section: crate::corpus::SectionLabel,
    pub draft_text: String,
    pub final_text: String,
    pub spans: Vec<TaggedSpan>,
    pub counts: DiffCounts,
}

fn by_term(matches: Vec<TermMatch>) -> BTreeMap<String, Vec<TermMatch>> {
    let mut out: BTreeMap<String, Vec<TermMatch>> = BTreeMap::new();
    for m in matches {
        out.entry(m.term.clone()).or_default().push(m);
    }
    out
}

fn tag_side(
    matcher: &PhraseMatcher,
    draft: &[crate::matcher::TokenSpan],
    final_: &[crate::matcher::TokenSpan],
    [deleted, kept, added]: [Category; 3],
    spans: &mut Vec<TaggedSpan>,
) {
    let d = by_term(matcher.find_matches(draft));
    let f = by_term(matcher.find_matches(final_));
    let empty = Vec::new();
    let terms: std::collections::BTreeSet<&String> = d.keys().chain(f.keys()).collect();
    for term in terms {
        let dm = d.get(term).unwrap_or(&empty);
        let fm = f.get(term).unwrap_or(&empty);
        let both = dm.len().min(fm.len());
        for (i, m) in dm.iter().enumerate() {
            let category = if i < both { kept } else { deleted };
            spans.push(TaggedSpan { side: Side::Draft, category, term: term.clone(), start: m.start, end: m.end });
        }
        for (i, m) in fm.iter().enumerate() {
            let category = if i < both { kept } else { added };
            spans.push(TaggedSpan { side: Side::Final, category, term: term.clone(), start: m.start, end: m.end });
        }
    }
}

/// Tags every consumer and clinical term occurrence in both texts.
pub fn annotate(section: &NoteSection, dict: &TermDictionary) -> SectionDiff {
    let draft = tokenize(&section.draft_text);
    let final_ = tokenize(&section.final_text);
    let mut spans = Vec::new();
    tag_side(
        dict.consumer_matcher(),
        &draft,
        &final_,
        [Category::ConsumerDeleted, Category::ConsumerKept, Category::ConsumerAdded],
        &mut spans,
    );
    tag_side(
        dict.clinical_matcher(),
        &draft,
        &final_,
        [Category::ClinicalDeleted, Category::ClinicalKept, Category::ClinicalAdded],
        &mut spans,
    );
    spans.sort_by_key(|s| (s.side as u8, s.start, s.end, s.category));

    let mut counts = DiffCounts::default();
    for s in &spans {
        match (s.category, s.side) {
            (Category::ConsumerDeleted, _) => counts.consumer_deleted += 1,
            (Category::ConsumerAdded, _) => counts.consumer_added += 1,
            (Category::ConsumerKept, Side::Draft) => counts.consumer_kept += 1,
            (Category::ClinicalDeleted, _) => counts.clinical_deleted += 1,
            (Category::ClinicalAdded, _) => counts.clinical_added += 1,
            (Category::ClinicalKept, Side::Draft) => counts.clinical_kept += 1,
            _ => {}
        }
    }
    SectionDiff {
        note_id: section.note_id.clone(),
        section: section.section,
        draft_text: section.draft_text.clone(),
        final_text: section.final_text.clone(),
        spans,
        counts,
    }
}

fn escape(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// Renders one side's text, wrapping each maximal segment covered by the
/// same set of spans in a `<mark>` carrying one class per category.
fn render_text(out: &mut String, text: &str, spans: &[&TaggedSpan]) {
    let mut cuts: Vec<usize> = vec![0, text.len()];
    for s in spans {
        cuts.push(s.start);
        cuts.push(s.end);
    }
    cuts.sort_unstable();
    cuts.dedup();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut active: Vec<&TaggedSpan> = spans.iter().copied().filter(|s| s.start <= a && s.end >= b).collect();
        if active.is_empty() {
            escape(out, &text[a..b]);
            continue;
        }
        active.sort_by_key(|s| s.category);
        let mut classes: Vec<&str> = active.iter().map(|s| s.category.css_class()).collect();
        classes.dedup();
        let mut terms: Vec<&str> = active.iter().map(|s| s.term.as_str()).collect();
        terms.sort_unstable();
        terms.dedup();
        out.push_str("<mark class=\"");
        out.push_str(&classes.join(" "));
        out.push_str("\" title=\"");
        escape(out, &terms.join("; "));
        out.push_str("\">");
        escape(out, &text[a..b]);
        out.push_str("</mark>");
    }
}

/// Header line with the category counts.
pub fn header_line(counts: &DiffCounts) -> String {
    format!(
        "consumer removed/kept/added: {}/{}/{} | clinical added: {} | clinical kept: {} | clinical removed: {}",
        counts.consumer_deleted,
        counts.consumer_kept,
        counts.consumer_added,
        counts.clinical_added,
        counts.clinical_kept,
        counts.clinical_deleted
    )
}

/// Standalone HTML page with the draft and final texts side by side.
pub fn render_html(diff: &SectionDiff) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>");
    escape(&mut out, &format!("{} {}", diff.note_id, diff.section.display_name()));
    out.push_str("</title>\n<style>\n");
    out.push_str(
        "body{font-family:sans-serif;margin:1.5em}\n\
         table{border-collapse:collapse;width:100%}\n\
         td{vertical-align:top;width:50%;padding:.5em;border:1px solid #ccc;line-height:1.6}\n\
         mark{padding:0 .1em}\n\
         .consumer-deleted{background:#f4a6a6;text-decoration:line-through}\n\
         .consumer-added{background:#f7d774}\n\
         .consumer-kept{background:#fde8c8}\n\
         .clinical-deleted{background:#c9c9c9;text-decoration:line-through}\n\
         .clinical-added{background:#8fd694}\n\
         .clinical-kept{background:#cfe8f7}\n",
    );
    out.push_str("</style>\n</head>\n<body>\n");
    out.push_str("<h1>NOTE ID: ");
    escape(&mut out, &diff.note_id);
    out.push_str("</h1>\n<h2>Section: ");
    escape(&mut out, diff.section.display_name());
    out.push_str("</h2>\n<p class=\"counts\">");
    escape(&mut out, &header_line(&diff.counts));
    out.push_str("</p>\n<p class=\"legend\">");
    for c in Category::ALL {
        let _ = write!(out, "<mark class=\"{}\">{}</mark> ", c.css_class(), c.label());
    }
    out.push_str("</p>\n<table>\n<tr><th>AI-generated draft</th><th>Clinician-edited final</th></tr>\n<tr><td>");
    let draft: Vec<&TaggedSpan> = diff.spans.iter().filter(|s| s.side == Side::Draft).collect();
    let final_: Vec<&TaggedSpan> = diff.spans.iter().filter(|s| s.side == Side::Final).collect();
    render_text(&mut out, &diff.draft_text, &draft);
    out.push_str("</td><td>");
    render_text(&mut out, &diff.final_text, &final_);
    out.push_str("</td></tr>\n</table>\n</body>\n</html>\n");
    out
}

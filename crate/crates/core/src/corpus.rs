//! Paired draft/final corpus ingestion.
//!
//! Input is JSON lines, one fragment per line. Fragments sharing
//! `(note_id, section)` are joined with a single space per side, in
//! `fragment_index` order when given and input order otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SectionLabel {
    Hpi,
    Ap,
    Results,
    PhysicalExam,
    Other,
}

impl SectionLabel {
    /// The four section types used by section-stratified analyses.
    pub const ANALYZED: [SectionLabel; 4] =
        [SectionLabel::Hpi, SectionLabel::Ap, SectionLabel::Results, SectionLabel::PhysicalExam];

    /// Case-insensitive parse; anything unrecognized becomes `Other`.
    pub fn parse(raw: &str) -> SectionLabel {
        let key: String = raw.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "hpi" | "historyofpresentillness" | "presentillness" => SectionLabel::Hpi,
            "ap" | "aandp" | "assessmentandplan" | "assessmentplan" => SectionLabel::Ap,
            "results" | "result" => SectionLabel::Results,
            "physicalexam" | "physicalexamination" | "pe" | "exam" => SectionLabel::PhysicalExam,
            _ => SectionLabel::Other,
        }
    }

    /// Machine identifier, e.g. `PHYSICAL_EXAM`.
    pub fn code(self) -> &'static str {
        match self {
            SectionLabel::Hpi => "HPI",
            SectionLabel::Ap => "AP",
            SectionLabel::Results => "RESULTS",
            SectionLabel::PhysicalExam => "PHYSICAL_EXAM",
            SectionLabel::Other => "OTHER",
        }
    }

    /// Human-readable table label, e.g. `A&P`.
    pub fn display_name(self) -> &'static str {
        match self {
            SectionLabel::Hpi => "HPI",
            SectionLabel::Ap => "A&P",
            SectionLabel::Results => "Results",
            SectionLabel::PhysicalExam => "Physical Exam",
            SectionLabel::Other => "Other",
        }
    }

    pub fn is_analyzed(self) -> bool {
        self != SectionLabel::Other
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Credential {
    Md,
    Do,
    Np,
    Pa,
    Od,
    #[default]
    Unknown,
}

impl Credential {
    pub fn parse(raw: &str) -> Credential {
        match raw.trim().to_ascii_uppercase().replace('.', "").as_str() {
            "MD" => Credential::Md,
            "DO" => Credential::Do,
            "NP" => Credential::Np,
            "PA" | "PA-C" => Credential::Pa,
            "OD" => Credential::Od,
            _ => Credential::Unknown,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Credential::Md => "MD",
            Credential::Do => "DO",
            Credential::Np => "NP",
            Credential::Pa => "PA",
            Credential::Od => "OD",
            Credential::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpecialtyGroup {
    Medical,
    PrimaryCare,
    Surgical,
    #[default]
    Unknown,
}

impl SpecialtyGroup {
    pub const KNOWN: [SpecialtyGroup; 3] =
        [SpecialtyGroup::Medical, SpecialtyGroup::PrimaryCare, SpecialtyGroup::Surgical];

    pub fn parse(raw: &str) -> SpecialtyGroup {
        let key: String = raw.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "medical" | "medicalspecialty" => SpecialtyGroup::Medical,
            "primarycare" | "primary" => SpecialtyGroup::PrimaryCare,
            "surgical" | "surgicalspecialty" | "surgery" => SpecialtyGroup::Surgical,
            _ => SpecialtyGroup::Unknown,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            SpecialtyGroup::Medical => "MEDICAL",
            SpecialtyGroup::PrimaryCare => "PRIMARY_CARE",
            SpecialtyGroup::Surgical => "SURGICAL",
            SpecialtyGroup::Unknown => "UNKNOWN",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            SpecialtyGroup::Medical => "Medical Specialty",
            SpecialtyGroup::PrimaryCare => "Primary Care",
            SpecialtyGroup::Surgical => "Surgical Specialty",
            SpecialtyGroup::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clinician {
    pub clinician_id: String,
    pub credential: Credential,
    pub specialty_group: SpecialtyGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSection {
    pub note_id: String,
    pub encounter_id: String,
    pub section: SectionLabel,
    pub draft_text: String,
    pub final_text: String,
    pub clinician_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Draft,
    Final,
}

/// One line of corpus JSONL. Either `side` + `text`, or both `draft` and
/// `final`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub note_id: String,
    #[serde(default)]
    pub encounter_id: String,
    pub section: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<String>,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    pub clinician_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialty_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment_index: Option<i64>,
}

/// A note-section dropped during ingestion because one side never appeared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedSection {
    pub note_id: String,
    pub section: SectionLabel,
    pub missing: Side,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_total: usize,
    pub records_kept: usize,
    pub records_excluded: usize,
    pub sections_kept: usize,
    pub excluded_sections: Vec<ExcludedSection>,
    pub warnings: Vec<String>,
}

/// Immutable collection of paired note-sections plus clinician metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    sections: Vec<NoteSection>,
    clinicians: BTreeMap<String, Clinician>,
}

#[derive(Default)]
struct Pending {
    encounter_id: String,
    clinician_id: String,
    // (fragment_index, arrival order, text)
    draft: Vec<(i64, usize, String)>,
    final_: Vec<(i64, usize, String)>,
    records: usize,
}

#[derive(Default)]
struct ClinicianDraft {
    credential: Option<Credential>,
    specialty: Option<SpecialtyGroup>,
}

fn join_fragments(mut frags: Vec<(i64, usize, String)>) -> String {
    frags.sort_by_key(|&(idx, order, _)| (idx, order));
    frags.into_iter().map(|(_, _, t)| t).collect::<Vec<_>>().join(" ")
}

impl Corpus {
    /// Reads corpus JSONL. Blank lines are skipped and not counted.
    pub fn ingest<R: BufRead>(reader: R) -> Result<(Corpus, IngestReport), CorpusError> {
        let mut pending: BTreeMap<(String, SectionLabel), Pending> = BTreeMap::new();
        let mut clinicians: BTreeMap<String, ClinicianDraft> = BTreeMap::new();
        let mut report = IngestReport::default();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Malformed { line: lineno, message: e.to_string() })?;
            let malformed = |message: &str| CorpusError::Malformed { line: lineno, message: message.to_string() };
            if rec.note_id.is_empty() {
                return Err(malformed("empty note_id"));
            }
            if rec.clinician_id.is_empty() {
                return Err(malformed("empty clinician_id"));
            }
            let sides: Vec<(Side, String)> = match (&rec.side, &rec.text, &rec.draft, &rec.final_text) {
                (Some(side), Some(text), None, None) => vec![(*side, text.clone())],
                (None, None, Some(d), Some(f)) => vec![(Side::Draft, d.clone()), (Side::Final, f.clone())],
                _ => return Err(malformed("expected either side+text or draft+final")),
            };
            report.records_total += 1;

            let label = SectionLabel::parse(&rec.section);
            let entry = pending.entry((rec.note_id.clone(), label)).or_default();
            if entry.records == 0 {
                entry.encounter_id = rec.encounter_id.clone();
                entry.clinician_id = rec.clinician_id.clone();
            } else if entry.clinician_id != rec.clinician_id {
                report.warnings.push(format!(
                    "line {lineno}: note {} section {} has conflicting clinician {} (keeping {})",
                    rec.note_id, label, rec.clinician_id, entry.clinician_id
                ));
            }
            entry.records += 1;
            let order = report.records_total;
            let idx = rec.fragment_index.unwrap_or(0);
            for (side, text) in sides {
                match side {
                    Side::Draft => entry.draft.push((idx, order, text)),
                    Side::Final => entry.final_.push((idx, order, text)),
                }
            }

            let c = clinicians.entry(rec.clinician_id.clone()).or_default();
            if let Some(raw) = rec.credential.as_deref() {
                let parsed = Credential::parse(raw);
                match c.credential {
                    None => c.credential = Some(parsed),
                    Some(prev) if prev != parsed => report.warnings.push(format!(
                        "line {lineno}: clinician {} credential {} conflicts with {} (first wins)",
                        rec.clinician_id,
                        parsed.code(),
                        prev.code()
                    )),
                    _ => {}
                }
            }
            if let Some(raw) = rec.specialty_group.as_deref() {
                let parsed = SpecialtyGroup::parse(raw);
                match c.specialty {
                    None => c.specialty = Some(parsed),
                    Some(prev) if prev != parsed => report.warnings.push(format!(
                        "line {lineno}: clinician {} specialty {} conflicts with {} (first wins)",
                        rec.clinician_id,
                        parsed.code(),
                        prev.code()
                    )),
                    _ => {}
                }
            }
        }

        let mut sections = Vec::with_capacity(pending.len());
        for ((note_id, section), p) in pending {
            let missing = if p.draft.is_empty() {
                Some(Side::Draft)
            } else if p.final_.is_empty() {
                Some(Side::Final)
            } else {
                None
            };
            if let Some(missing) = missing {
                report.records_excluded += p.records;
                report.excluded_sections.push(ExcludedSection { note_id, section, missing, records: p.records });
                continue;
            }
            report.records_kept += p.records;
            sections.push(NoteSection {
                note_id,
                encounter_id: p.encounter_id,
                section,
                draft_text: join_fragments(p.draft),
                final_text: join_fragments(p.final_),
                clinician_id: p.clinician_id,
            });
        }
        report.sections_kept = sections.len();
        for w in &report.warnings {
            log::warn!("{w}");
        }

        let clinicians = clinicians
            .into_iter()
            .map(|(id, c)| {
                let clinician = Clinician {
                    clinician_id: id.clone(),
                    credential: c.credential.unwrap_or_default(),
                    specialty_group: c.specialty.unwrap_or_default(),
                };
                (id, clinician)
            })
            .collect();
        Ok((Corpus { sections, clinicians }, report))
    }

    /// Builds a corpus from already paired sections. Later duplicates of a
    /// `(note_id, section)` key are appended to the first, like fragments.
    pub fn from_sections(sections: Vec<NoteSection>, clinicians: Vec<Clinician>) -> Corpus {
        let mut merged: BTreeMap<(String, SectionLabel), NoteSection> = BTreeMap::new();
        for s in sections {
            match merged.get_mut(&(s.note_id.clone(), s.section)) {
                Some(existing) => {
                    existing.draft_text.push(' ');
                    existing.draft_text.push_str(&s.draft_text);
                    existing.final_text.push(' ');
                    existing.final_text.push_str(&s.final_text);
                }
                None => {
                    merged.insert((s.note_id.clone(), s.section), s);
                }
            }
        }
        let mut registry: BTreeMap<String, Clinician> = BTreeMap::new();
        for c in clinicians {
            registry.entry(c.clinician_id.clone()).or_insert(c);
        }
        for s in merged.values() {
            registry.entry(s.clinician_id.clone()).or_insert_with(|| Clinician {
                clinician_id: s.clinician_id.clone(),
                credential: Credential::Unknown,
                specialty_group: SpecialtyGroup::Unknown,
            });
        }
        Corpus { sections: merged.into_values().collect(), clinicians: registry }
    }

    /// Sections ordered by `(note_id, section)`.
    pub fn sections(&self) -> &[NoteSection] {
        &self.sections
    }

    pub fn clinicians(&self) -> &BTreeMap<String, Clinician> {
        &self.clinicians
    }

    pub fn clinician(&self, id: &str) -> Option<&Clinician> {
        self.clinicians.get(id)
    }

    pub fn find_section(&self, note_id: &str, section: SectionLabel) -> Option<&NoteSection> {
        self.sections
            .binary_search_by(|s| (s.note_id.as_str(), s.section).cmp(&(note_id, section)))
            .ok()
            .map(|i| &self.sections[i])
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    /// Every token appearing in any draft or final text.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut vocab = BTreeSet::new();
        for s in &self.sections {
            for span in tokenize(&s.draft_text).into_iter().chain(tokenize(&s.final_text)) {
                vocab.insert(span.token);
            }
        }
        vocab
    }

    /// Token frequencies over all draft and final texts.
    pub fn token_frequencies(&self) -> std::collections::HashMap<String, u64> {
        let mut freq = std::collections::HashMap::new();
        for s in &self.sections {
            for span in tokenize(&s.draft_text).into_iter().chain(tokenize(&s.final_text)) {
                *freq.entry(span.token).or_insert(0) += 1;
            }
        }
        freq
    }
}

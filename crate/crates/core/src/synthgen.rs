//! Deterministic synthetic paired corpus with ground truth.
//!
//! Draft texts are pseudo-word token soup (with punctuation, hyphenated and
//! apostrophe tokens, digits and case variation) into which dictionary
//! terms are placed. Final texts are derived from the drafts by clinician
//! profile edits plus the planned substitutions and confounds.
//!
//! Ground truth is exact by construction:
//! * every distinct term uses tokens no other term or background word uses;
//! * a term occurrence always has a background word on both sides, and
//!   those neighbours are never deleted, so occurrences cannot fuse;
//! * filler edits only introduce a clinical term whose consumer term is
//!   absent from the draft, so they can never form a confirmed event.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusRecord, SectionLabel, Side};
use crate::dictionary::normalize_phrase;
use crate::matcher::term_tokens;
use crate::transform::{FilterConfig, TransformationEvent};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditorProfile {
    Minimal,
    Moderate,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMix {
    pub minimal: f64,
    pub moderate: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionMix {
    pub hpi: f64,
    pub ap: f64,
    pub results: f64,
    pub physical_exam: f64,
}

impl SectionMix {
    fn weights(&self) -> [(SectionLabel, f64); 4] {
        [
            (SectionLabel::Hpi, self.hpi),
            (SectionLabel::Ap, self.ap),
            (SectionLabel::Results, self.results),
            (SectionLabel::PhysicalExam, self.physical_exam),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPair {
    pub consumer: String,
    pub clinical: String,
    pub sections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfoundKind {
    /// The clinical term is already in the draft; the consumer term is replaced.
    ClinicalAlreadyInDraft,
    /// One of two consumer occurrences is replaced, the other survives.
    ConsumerPartiallyKept,
    /// The consumer term is deleted with no clinical replacement.
    IncidentalDeletion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedConfound {
    pub consumer: String,
    pub clinical: String,
    pub kind: ConfoundKind,
    pub sections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub clinicians: usize,
    pub profile_mix: ProfileMix,
    /// Total number of note-sections to generate.
    pub sections: usize,
    pub sections_per_note_min: usize,
    pub sections_per_note_max: usize,
    pub section_mix: SectionMix,
    pub background_vocab: usize,
    /// Background words per section before edits.
    pub background_words: usize,
    /// Synthetic consumer/clinical mapping pairs added to the dictionary.
    pub filler_pairs: usize,
    /// Filler term occurrences placed in each draft, per side.
    pub filler_per_section: usize,
    pub injections: Vec<PlannedPair>,
    pub confounds: Vec<PlannedConfound>,
    /// Record byte spans of every placed term in the ground truth.
    pub record_spans: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            clinicians: 24,
            profile_mix: ProfileMix { minimal: 0.1, moderate: 0.75, high: 0.15 },
            sections: 400,
            sections_per_note_min: 1,
            sections_per_note_max: 3,
            section_mix: SectionMix { hpi: 48.6, ap: 34.2, results: 9.6, physical_exam: 7.7 },
            background_vocab: 2000,
            background_words: 80,
            filler_pairs: 300,
            filler_per_section: 4,
            injections: vec![PlannedPair {
                consumer: "high blood pressure".into(),
                clinical: "hypertension".into(),
                sections: 5,
            }],
            confounds: Vec::new(),
            record_spans: true,
        }
    }
}

const PAPER_SHAPED: &str = include_str!("../presets/paper_shaped.json");
const DETECTOR_BENCH: &str = include_str!("../presets/detector_bench.json");

impl SynthSpec {
    /// Bundled preset mirroring the relative section mix and pair-frequency
    /// shape of a large ambient-documentation study: 10,000 note-sections
    /// and a 50,000-row dictionary.
    pub fn paper_shaped() -> SynthSpec {
        serde_json::from_str(PAPER_SHAPED).expect("bundled preset parses")
    }

    /// Bundled preset with 500 clean substitutions and 500 confound sections.
    pub fn detector_bench() -> SynthSpec {
        serde_json::from_str(DETECTOR_BENCH).expect("bundled preset parses")
    }

    pub fn preset(name: &str) -> Option<SynthSpec> {
        match name {
            "paper" | "paper-shaped" | "paper_shaped" => Some(Self::paper_shaped()),
            "detector" | "detector-bench" | "detector_bench" => Some(Self::detector_bench()),
            "small" | "default" => Some(Self::default()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let mix = &self.profile_mix;
        let fractions = [mix.minimal, mix.moderate, mix.high];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidSpec("profile fractions must lie in [0,1] and sum to 1".into()));
        }
        if self.clinicians == 0 || self.sections == 0 {
            return Err(SynthError::InvalidSpec("clinicians and sections must be positive".into()));
        }
        if self.sections_per_note_min == 0
            || self.sections_per_note_min > self.sections_per_note_max
            || self.sections_per_note_max > 4
        {
            return Err(SynthError::InvalidSpec("sections per note must satisfy 1 <= min <= max <= 4".into()));
        }
        let w = self.section_mix.weights();
        if w.iter().any(|(_, x)| *x < 0.0 || !x.is_finite())
            || w.iter().filter(|(_, x)| *x > 0.0).count() < self.sections_per_note_max
        {
            return Err(SynthError::InvalidSpec(
                "section mix needs a positive weight for every section per note".into(),
            ));
        }
        if self.background_vocab < 10 || self.background_words < 2 {
            return Err(SynthError::InvalidSpec("background vocabulary and length too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideTruth {
    pub draft_total: u64,
    pub final_total: u64,
    pub deleted: u64,
    pub added: u64,
    pub kept: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSide {
    Consumer,
    Clinical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSpan {
    pub side: Side,
    pub term: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTruth {
    pub note_id: String,
    pub section: SectionLabel,
    pub clinician_id: String,
    pub consumer: SideTruth,
    pub clinical: SideTruth,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<TruthSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfoundSection {
    pub note_id: String,
    pub section: SectionLabel,
    pub kind: ConfoundKind,
    pub consumer_term: String,
    pub clinical_term: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicianTruth {
    pub clinician_id: String,
    pub profile: EditorProfile,
    pub credential: String,
    pub specialty_group: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub events: Vec<TransformationEvent>,
    pub confounds: Vec<ConfoundSection>,
    pub sections: Vec<SectionTruth>,
    pub clinicians: Vec<ClinicianTruth>,
}

impl GroundTruth {
    pub fn section(&self, note_id: &str, section: SectionLabel) -> Option<&SectionTruth> {
        self.sections.iter().find(|s| s.note_id == note_id && s.section == section)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRow {
    pub consumer_term: String,
    pub clinical_term: String,
    pub concept_id: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub spec: SynthSpec,
    pub records: Vec<CorpusRecord>,
    pub dictionary: Vec<DictionaryRow>,
    pub truth: GroundTruth,
}

impl SynthOutput {
    pub fn corpus_jsonl(&self) -> Result<Vec<u8>, SynthError> {
        let mut buf = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    pub fn dictionary_csv(&self) -> Result<Vec<u8>, SynthError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["consumer_term", "clinical_term", "concept_id", "source"])?;
        for r in &self.dictionary {
            w.write_record([&r.consumer_term, &r.clinical_term, &r.concept_id, &r.source])?;
        }
        w.into_inner().map_err(|e| SynthError::Io(e.into_error()))
    }

    /// Writes `corpus.jsonl`, `dictionary.csv`, `ground_truth.json` and
    /// `synth_spec.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("corpus.jsonl"), self.corpus_jsonl()?)?;
        fs::write(dir.join("dictionary.csv"), self.dictionary_csv()?)?;
        let mut truth = fs::File::create(dir.join("ground_truth.json"))?;
        serde_json::to_writer(&mut truth, &self.truth)?;
        truth.write_all(b"\n")?;
        let mut spec = serde_json::to_vec_pretty(&self.spec)?;
        spec.push(b'\n');
        fs::write(dir.join("synth_spec.json"), spec)?;
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Unique pseudo-words drawn from one RNG, never repeating a reserved token.
struct WordFactory {
    used: HashSet<String>,
}

impl WordFactory {
    fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
        let mut w = String::with_capacity(syllables * 2 + 1);
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if rng.random_bool(0.3) {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        }
        w
    }

    /// A fresh token, checked against every token handed out so far.
    fn fresh(&mut self, rng: &mut ChaCha8Rng, min_syll: usize, max_syll: usize) -> String {
        loop {
            let syllables = rng.random_range(min_syll..=max_syll);
            let w = Self::pseudo_word(rng, syllables);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    /// A background word: usually plain, sometimes hyphenated, with an
    /// apostrophe or with a digit. All of its tokens are reserved.
    fn background(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.random_range(2..=3);
            let base = Self::pseudo_word(rng, syllables);
            let w = match rng.random_range(0..20) {
                0 => format!("{base}-{}", Self::pseudo_word(rng, 1)),
                1 => format!("{base}'s"),
                2 => format!("{base}{}", rng.random_range(1..10)),
                _ => base,
            };
            if term_tokens(&w).len() == 1 && self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Item {
    Word { text: String, protected: bool },
    Term { term: String },
}

#[derive(Debug, Clone, Copy)]
struct EditRates {
    untouched: f64,
    background_delete: f64,
    consumer_delete: f64,
    clinical_delete: f64,
    consumer_adds: usize,
    clinical_adds: usize,
}

fn edit_rates(profile: EditorProfile, label: SectionLabel) -> Option<EditRates> {
    let base = match profile {
        EditorProfile::Minimal => return None,
        EditorProfile::Moderate => EditRates {
            untouched: 0.08,
            background_delete: 0.15,
            consumer_delete: 0.35,
            clinical_delete: 0.2,
            consumer_adds: 1,
            clinical_adds: 2,
        },
        EditorProfile::High => EditRates {
            untouched: 0.02,
            background_delete: 0.5,
            consumer_delete: 0.85,
            clinical_delete: 0.6,
            consumer_adds: 1,
            clinical_adds: 1,
        },
    };
    let scale = if matches!(label, SectionLabel::Results | SectionLabel::PhysicalExam) { 0.5 } else { 1.0 };
    Some(EditRates {
        background_delete: base.background_delete * scale,
        consumer_delete: base.consumer_delete * scale,
        clinical_delete: base.clinical_delete * scale,
        ..base
    })
}

/// Applies random case variation to one word.
fn vary_case(rng: &mut ChaCha8Rng, word: &str) -> String {
    match rng.random_range(0..40) {
        0 => word.to_uppercase(),
        1..=4 => {
            let mut c = word.chars();
            match c.next() {
                Some(first) => first.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        }
        _ => word.to_string(),
    }
}

/// Renders items to text; returns the text and the byte span of every term.
fn render(rng: &mut ChaCha8Rng, items: &[Item]) -> (String, Vec<(String, usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    for item in items {
        if !text.is_empty() {
            text.push(' ');
        }
        match item {
            Item::Word { text: w, .. } => text.push_str(&vary_case(rng, w)),
            Item::Term { term } => {
                let start = text.len();
                for (i, tok) in term.split(' ').enumerate() {
                    if i > 0 {
                        text.push_str(if rng.random_bool(0.08) { " - " } else { " " });
                    }
                    text.push_str(&vary_case(rng, tok));
                }
                spans.push((term.clone(), start, text.len()));
            }
        }
        if rng.random_bool(0.08) {
            text.push(*[',', '.', ';', ':'].choose(rng).expect("nonempty"));
        }
    }
    (text, spans)
}

/// Splits at single spaces into 1..=3 fragments that rejoin with " ".
fn fragment(rng: &mut ChaCha8Rng, text: &str) -> Vec<String> {
    let spaces: Vec<usize> = text.match_indices(' ').map(|(i, _)| i).collect();
    let pieces = rng.random_range(1..=3usize).min(spaces.len() + 1);
    let mut cuts: Vec<usize> = spaces.choose_multiple(rng, pieces - 1).copied().collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(pieces);
    let mut from = 0;
    for c in cuts {
        out.push(text[from..c].to_string());
        from = c + 1;
    }
    out.push(text[from..].to_string());
    out
}

fn term_counts(items: &[Item]) -> BTreeMap<&str, u64> {
    let mut out = BTreeMap::new();
    for item in items {
        if let Item::Term { term } = item {
            *out.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    out
}

fn side_truth(draft: &BTreeMap<&str, u64>, final_: &BTreeMap<&str, u64>, side_terms: &HashSet<String>) -> SideTruth {
    let mut t = SideTruth { draft_total: 0, final_total: 0, deleted: 0, added: 0, kept: 0 };
    let terms: BTreeSet<&str> =
        draft.keys().chain(final_.keys()).copied().filter(|k| side_terms.contains(*k)).collect();
    for term in terms {
        let d = draft.get(term).copied().unwrap_or(0);
        let f = final_.get(term).copied().unwrap_or(0);
        t.draft_total += d;
        t.final_total += f;
        t.kept += d.min(f);
        t.deleted += d.saturating_sub(f);
        t.added += f.saturating_sub(d);
    }
    t
}

#[derive(Debug, Clone)]
enum PlanItem {
    Clean { consumer: String, clinical: String },
    Confound { consumer: String, clinical: String, kind: ConfoundKind },
}

struct Slot {
    note_id: String,
    encounter_id: String,
    label: SectionLabel,
    clinician: usize,
}

/// Validates planned pairs: normalized, admitted by the default detection
/// filter, tokens distinct within each term and disjoint across distinct
/// terms.
fn validate_plan(spec: &SynthSpec) -> Result<Vec<(String, String)>, SynthError> {
    let filter = FilterConfig::default();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (c, k) in spec
        .injections
        .iter()
        .map(|p| (&p.consumer, &p.clinical))
        .chain(spec.confounds.iter().map(|p| (&p.consumer, &p.clinical)))
    {
        for term in [c, k] {
            if normalize_phrase(term).ok().as_ref() != Some(term) || term_tokens(term).join(" ") != *term {
                return Err(SynthError::Infeasible(format!("term {term:?} is not a normalized plain phrase")));
            }
        }
        if c == k {
            return Err(SynthError::Infeasible(format!("pair maps {c:?} to itself")));
        }
        if !filter.admits(c, k) {
            return Err(SynthError::Infeasible(format!(
                "pair ({c:?}, {k:?}) is excluded by the default detection filter"
            )));
        }
        pairs.push((c.clone(), k.clone()));
    }
    let mut owner: HashMap<String, String> = HashMap::new();
    for term in pairs.iter().flat_map(|(c, k)| [c, k]) {
        let tokens = term_tokens(term);
        let distinct: HashSet<&String> = tokens.iter().collect();
        if distinct.len() != tokens.len() {
            return Err(SynthError::Infeasible(format!("term {term:?} repeats a token")));
        }
        for tok in tokens {
            match owner.get(&tok) {
                Some(other) if other != term => {
                    return Err(SynthError::Infeasible(format!("terms {other:?} and {term:?} share token {tok:?}")));
                }
                _ => {
                    owner.insert(tok, term.clone());
                }
            }
        }
    }
    let planned: usize = spec.injections.iter().map(|p| p.sections).sum::<usize>()
        + spec.confounds.iter().map(|p| p.sections).sum::<usize>();
    if planned > spec.sections {
        return Err(SynthError::Infeasible(format!(
            "{planned} planned sections exceed {} generated sections",
            spec.sections
        )));
    }
    pairs.sort();
    pairs.dedup();
    Ok(pairs)
}

fn assign_profiles(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<EditorProfile> {
    let n = spec.clinicians;
    let minimal = (spec.profile_mix.minimal * n as f64).round() as usize;
    let high = ((spec.profile_mix.high * n as f64).round() as usize).min(n - minimal.min(n));
    let minimal = minimal.min(n);
    let mut profiles = vec![EditorProfile::Moderate; n];
    for p in profiles.iter_mut().take(minimal) {
        *p = EditorProfile::Minimal;
    }
    for p in profiles.iter_mut().skip(minimal).take(high) {
        *p = EditorProfile::High;
    }
    profiles.shuffle(rng);
    profiles
}

fn pick_labels(rng: &mut ChaCha8Rng, mix: &SectionMix, count: usize) -> Vec<SectionLabel> {
    let mut pool: Vec<(SectionLabel, f64)> = mix.weights().into_iter().filter(|(_, w)| *w > 0.0).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        let mut idx = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if target < *w {
                idx = i;
                break;
            }
            target -= w;
        }
        out.push(pool.remove(idx).0);
    }
    out.sort();
    out
}

/// Generates the corpus, its dictionary and the ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let plan_pairs = validate_plan(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut words = WordFactory { used: HashSet::new() };
    for (c, k) in &plan_pairs {
        words.used.extend(term_tokens(c));
        words.used.extend(term_tokens(k));
    }
    let filler: Vec<(String, String)> = (0..spec.filler_pairs)
        .map(|_| {
            let mut term = |rng: &mut ChaCha8Rng| {
                let n = match rng.random_range(0..10) {
                    0..=5 => 1,
                    6..=8 => 2,
                    _ => 3,
                };
                (0..n).map(|_| words.fresh(rng, 2, 4)).collect::<Vec<_>>().join(" ")
            };
            let c = term(&mut rng);
            let k = term(&mut rng);
            (c, k)
        })
        .collect();
    let background: Vec<String> = (0..spec.background_vocab).map(|_| words.background(&mut rng)).collect();

    let consumer_terms: HashSet<String> =
        plan_pairs.iter().map(|(c, _)| c.clone()).chain(filler.iter().map(|(c, _)| c.clone())).collect();
    let clinical_terms: HashSet<String> =
        plan_pairs.iter().map(|(_, k)| k.clone()).chain(filler.iter().map(|(_, k)| k.clone())).collect();

    let profiles = assign_profiles(spec, &mut rng);
    const CREDENTIALS: [(&str, u32); 6] = [("MD", 66), ("DO", 7), ("NP", 5), ("PA", 4), ("OD", 1), ("", 17)];
    const SPECIALTIES: [&str; 4] = ["Medical", "Primary Care", "Surgical", ""];
    let clinicians: Vec<ClinicianTruth> = profiles
        .iter()
        .enumerate()
        .map(|(i, &profile)| {
            let mut roll = rng.random_range(0..100u32);
            let credential = CREDENTIALS
                .iter()
                .find(|(_, w)| {
                    if roll < *w {
                        true
                    } else {
                        roll -= w;
                        false
                    }
                })
                .map_or("", |(c, _)| c);
            let specialty = SPECIALTIES[rng.random_range(0..SPECIALTIES.len())];
            ClinicianTruth {
                clinician_id: format!("C{:04}", i + 1),
                profile,
                credential: credential.to_string(),
                specialty_group: specialty.to_string(),
            }
        })
        .collect();

    // Lay out notes and their sections.
    let mut slots: Vec<Slot> = Vec::with_capacity(spec.sections);
    let mut note_idx = 0usize;
    while slots.len() < spec.sections {
        note_idx += 1;
        let want =
            rng.random_range(spec.sections_per_note_min..=spec.sections_per_note_max).min(spec.sections - slots.len());
        let clinician = rng.random_range(0..spec.clinicians);
        for label in pick_labels(&mut rng, &spec.section_mix, want) {
            slots.push(Slot {
                note_id: format!("N{note_idx:07}"),
                encounter_id: format!("E{:07}", note_idx - note_idx / 40),
                label,
                clinician,
            });
        }
    }

    // Plan items go to sections of editing clinicians, weighted toward
    // narrative sections.
    let mut plan: Vec<PlanItem> = Vec::new();
    for p in &spec.injections {
        plan.extend(
            (0..p.sections).map(|_| PlanItem::Clean { consumer: p.consumer.clone(), clinical: p.clinical.clone() }),
        );
    }
    for p in &spec.confounds {
        plan.extend((0..p.sections).map(|_| PlanItem::Confound {
            consumer: p.consumer.clone(),
            clinical: p.clinical.clone(),
            kind: p.kind,
        }));
    }
    let mut eligible: Vec<(f64, usize)> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| profiles[s.clinician] != EditorProfile::Minimal)
        .map(|(i, s)| {
            let w = match s.label {
                SectionLabel::Ap => 3.0,
                SectionLabel::Hpi => 2.0,
                _ => 0.3,
            };
            (rng.random::<f64>().powf(1.0 / w), i)
        })
        .collect();
    if plan.len() > eligible.len() {
        return Err(SynthError::Infeasible(format!(
            "{} planned sections exceed {} sections written by editing clinicians",
            plan.len(),
            eligible.len()
        )));
    }
    eligible.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    plan.shuffle(&mut rng);
    let mut plan_for: HashMap<usize, PlanItem> = HashMap::new();
    for (item, (_, slot)) in plan.into_iter().zip(eligible) {
        plan_for.insert(slot, item);
    }

    let mut records = Vec::new();
    let mut truths = Vec::with_capacity(slots.len());
    let mut events = Vec::new();
    let mut confound_sections = Vec::new();

    for (slot_idx, slot) in slots.iter().enumerate() {
        let clinician = &clinicians[slot.clinician];
        let mut draft: Vec<Item> = (0..spec.background_words)
            .map(|_| Item::Word { text: background[rng.random_range(0..background.len())].clone(), protected: false })
            .collect();

        // Gap g sits before word g (1..len); each gap holds at most one term.
        let mut free_gaps: Vec<usize> = (1..draft.len()).collect();
        free_gaps.shuffle(&mut rng);
        let mut draft_terms: Vec<(usize, String)> = Vec::new();
        let mut final_terms: Vec<(usize, String)> = Vec::new();
        let take_gap = |gaps: &mut Vec<usize>| gaps.pop();

        let rates = edit_rates(clinician.profile, slot.label);
        let untouched = rates.is_some_and(|r| rng.random_bool(r.untouched));
        let rates = if untouched { None } else { rates };

        let mut draft_consumers: HashSet<usize> = HashSet::new();
        for side in [TermSide::Consumer, TermSide::Clinical] {
            if filler.is_empty() {
                break;
            }
            for _ in 0..spec.filler_per_section {
                let Some(gap) = take_gap(&mut free_gaps) else { break };
                let pair = rng.random_range(0..filler.len());
                let term = match side {
                    TermSide::Consumer => {
                        draft_consumers.insert(pair);
                        filler[pair].0.clone()
                    }
                    TermSide::Clinical => filler[pair].1.clone(),
                };
                let p_delete = match (side, rates) {
                    (_, None) => 0.0,
                    (TermSide::Consumer, Some(r)) => r.consumer_delete,
                    (TermSide::Clinical, Some(r)) => r.clinical_delete,
                };
                draft_terms.push((gap, term.clone()));
                if !rng.random_bool(p_delete) {
                    final_terms.push((gap, term));
                }
            }
        }
        if let Some(r) = rates {
            for _ in 0..rng.random_range(0..=r.consumer_adds) {
                let Some(gap) = take_gap(&mut free_gaps) else { break };
                if filler.is_empty() {
                    break;
                }
                final_terms.push((gap, filler[rng.random_range(0..filler.len())].0.clone()));
            }
            for _ in 0..rng.random_range(0..=r.clinical_adds) {
                if filler.is_empty() {
                    break;
                }
                // Only clinical terms whose consumer is absent from the draft.
                let pair = rng.random_range(0..filler.len());
                if draft_consumers.contains(&pair) {
                    continue;
                }
                let Some(gap) = take_gap(&mut free_gaps) else { break };
                final_terms.push((gap, filler[pair].1.clone()));
            }
        }

        if let Some(item) = plan_for.get(&slot_idx) {
            let mut place = |draft_term: Option<&str>, final_term: Option<&str>| {
                if let Some(gap) = take_gap(&mut free_gaps) {
                    if let Some(t) = draft_term {
                        draft_terms.push((gap, t.to_string()));
                    }
                    if let Some(t) = final_term {
                        final_terms.push((gap, t.to_string()));
                    }
                    true
                } else {
                    false
                }
            };
            let ok = match item {
                PlanItem::Clean { consumer, clinical } => {
                    let reps = rng.random_range(1..=2);
                    (0..reps).all(|_| place(Some(consumer), Some(clinical)))
                }
                PlanItem::Confound { consumer, clinical, kind } => match kind {
                    ConfoundKind::ClinicalAlreadyInDraft => {
                        place(Some(clinical), Some(clinical)) && place(Some(consumer), Some(clinical))
                    }
                    ConfoundKind::ConsumerPartiallyKept => {
                        place(Some(consumer), Some(consumer)) && place(Some(consumer), Some(clinical))
                    }
                    ConfoundKind::IncidentalDeletion => place(Some(consumer), None),
                },
            };
            if !ok {
                return Err(SynthError::Infeasible("section too short to hold its planned terms".into()));
            }
            match item {
                PlanItem::Clean { consumer, clinical } => events.push(TransformationEvent {
                    note_id: slot.note_id.clone(),
                    section: slot.label,
                    consumer_term: consumer.clone(),
                    clinical_term: clinical.clone(),
                }),
                PlanItem::Confound { consumer, clinical, kind } => confound_sections.push(ConfoundSection {
                    note_id: slot.note_id.clone(),
                    section: slot.label,
                    kind: *kind,
                    consumer_term: consumer.clone(),
                    clinical_term: clinical.clone(),
                }),
            }
        }

        // Neighbours of every occupied gap survive background deletion.
        for &(gap, _) in draft_terms.iter().chain(&final_terms) {
            for w in [gap - 1, gap] {
                if let Item::Word { protected, .. } = &mut draft[w] {
                    *protected = true;
                }
            }
        }
        let build = |words: &[Item], terms: &[(usize, String)], keep: &[bool]| -> Vec<Item> {
            let mut at: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
            for (gap, t) in terms {
                at.entry(*gap).or_default().push(t);
            }
            let mut out = Vec::new();
            for (i, w) in words.iter().enumerate() {
                if let Some(ts) = at.get(&i) {
                    // one term per gap by construction
                    out.push(Item::Term { term: ts[0].clone() });
                }
                if keep[i] {
                    out.push(w.clone());
                }
            }
            out
        };
        let keep_all = vec![true; draft.len()];
        let keep_final: Vec<bool> = draft
            .iter()
            .map(|w| match (w, rates) {
                (Item::Word { protected: true, .. }, _) | (_, None) => true,
                (_, Some(r)) => !rng.random_bool(r.background_delete),
            })
            .collect();
        let draft_items = build(&draft, &draft_terms, &keep_all);
        let final_items = build(&draft, &final_terms, &keep_final);
        draft.clear();

        let (draft_text, draft_spans) = render(&mut rng, &draft_items);
        let (final_text, final_spans) = render(&mut rng, &final_items);
        let dc = term_counts(&draft_items);
        let fc = term_counts(&final_items);
        let mut spans = Vec::new();
        if spec.record_spans {
            spans.extend(draft_spans.into_iter().map(|(term, start, end)| TruthSpan {
                side: Side::Draft,
                term,
                start,
                end,
            }));
            spans.extend(final_spans.into_iter().map(|(term, start, end)| TruthSpan {
                side: Side::Final,
                term,
                start,
                end,
            }));
        }
        truths.push(SectionTruth {
            note_id: slot.note_id.clone(),
            section: slot.label,
            clinician_id: clinician.clinician_id.clone(),
            consumer: side_truth(&dc, &fc, &consumer_terms),
            clinical: side_truth(&dc, &fc, &clinical_terms),
            spans,
        });

        // Interleave fragments while keeping per-side order.
        let mut frags: Vec<(Side, usize, String)> = Vec::new();
        let d = fragment(&mut rng, &draft_text);
        let f = fragment(&mut rng, &final_text);
        let (mut di, mut fi) = (d.into_iter().enumerate().peekable(), f.into_iter().enumerate().peekable());
        loop {
            let take_draft = match (di.peek(), fi.peek()) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                _ => rng.random_bool(0.5),
            };
            let (side, (i, text)) = if take_draft {
                (Side::Draft, di.next().expect("peeked"))
            } else {
                (Side::Final, fi.next().expect("peeked"))
            };
            frags.push((side, i, text));
        }
        for (side, i, text) in frags {
            records.push(CorpusRecord {
                note_id: slot.note_id.clone(),
                encounter_id: slot.encounter_id.clone(),
                section: slot.label.display_name().to_string(),
                side: Some(side),
                text: Some(text),
                draft: None,
                final_text: None,
                clinician_id: clinician.clinician_id.clone(),
                credential: (!clinician.credential.is_empty()).then(|| clinician.credential.clone()),
                specialty_group: (!clinician.specialty_group.is_empty()).then(|| clinician.specialty_group.clone()),
                fragment_index: Some(i as i64),
            });
        }
    }

    let mut dictionary: Vec<DictionaryRow> = plan_pairs
        .iter()
        .enumerate()
        .map(|(i, (c, k))| DictionaryRow {
            consumer_term: c.clone(),
            clinical_term: k.clone(),
            concept_id: format!("P{:06}", i + 1),
            source: "planned".into(),
        })
        .collect();
    dictionary.extend(filler.iter().enumerate().map(|(i, (c, k))| DictionaryRow {
        consumer_term: c.clone(),
        clinical_term: k.clone(),
        concept_id: format!("S{:06}", i + 1),
        source: "synthetic".into(),
    }));

    events.sort();
    confound_sections.sort_by(|a, b| (&a.note_id, a.section).cmp(&(&b.note_id, b.section)));
    truths.sort_by(|a, b| (&a.note_id, a.section).cmp(&(&b.note_id, b.section)));
    Ok(SynthOutput {
        spec: spec.clone(),
        records,
        dictionary,
        truth: GroundTruth { seed: spec.seed, events, confounds: confound_sections, sections: truths, clinicians },
    })
}

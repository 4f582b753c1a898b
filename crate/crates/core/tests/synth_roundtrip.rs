use std::collections::BTreeSet;
use std::path::Path;

use termshift::dictionary::{build_entries, read_source_rows, DictionaryConfig, ExclusionList};
use termshift::diff::{annotate, Category};
use termshift::frequency::corpus_deltas;
use termshift::synthgen::{generate, ConfoundKind, PlannedConfound, PlannedPair, SynthOutput, SynthSpec};
use termshift::transform::{detect_from_delta, FilterConfig};
use termshift::{Corpus, Parallelism, TermDictionary};

fn load(out: &SynthOutput) -> (Corpus, TermDictionary) {
    let (corpus, report) = Corpus::ingest(&out.corpus_jsonl().unwrap()[..]).unwrap();
    assert!(report.excluded_sections.is_empty());
    let rows = read_source_rows(&out.dictionary_csv().unwrap()[..], Path::new("dictionary.csv")).unwrap();
    let (entries, build) = build_entries(&rows, &ExclusionList::default(), None, &DictionaryConfig::default());
    assert_eq!(build.retained, out.dictionary.len());
    (corpus, TermDictionary::from_entries(entries, None))
}

fn spec_with_everything() -> SynthSpec {
    SynthSpec {
        seed: 99,
        sections: 600,
        injections: vec![
            PlannedPair { consumer: "high blood pressure".into(), clinical: "hypertension".into(), sections: 12 },
            PlannedPair { consumer: "sugar".into(), clinical: "glucose".into(), sections: 9 },
        ],
        confounds: vec![
            PlannedConfound {
                consumer: "heart attack".into(),
                clinical: "myocardial infarction".into(),
                kind: ConfoundKind::ClinicalAlreadyInDraft,
                sections: 7,
            },
            PlannedConfound {
                consumer: "kidney stones".into(),
                clinical: "nephrolithiasis".into(),
                kind: ConfoundKind::ConsumerPartiallyKept,
                sections: 7,
            },
            PlannedConfound {
                consumer: "sugar".into(),
                clinical: "glucose".into(),
                kind: ConfoundKind::IncidentalDeletion,
                sections: 7,
            },
        ],
        ..SynthSpec::default()
    }
}

#[test]
fn pipeline_reproduces_ground_truth() {
    let out = generate(&spec_with_everything()).unwrap();
    let (corpus, dict) = load(&out);
    assert_eq!(corpus.len(), out.truth.sections.len());

    let deltas = corpus_deltas(&corpus, &dict, Parallelism::Sequential);
    let filter = FilterConfig::default();
    let mut events = Vec::new();
    for (delta, truth) in deltas.iter().zip(&out.truth.sections) {
        assert_eq!((&delta.note_id, delta.section), (&truth.note_id, truth.section));
        for (side, t) in [(&delta.consumer, &truth.consumer), (&delta.clinical, &truth.clinical)] {
            assert_eq!(side.draft.total, t.draft_total, "{} {}", delta.note_id, delta.section);
            assert_eq!(side.final_.total, t.final_total, "{} {}", delta.note_id, delta.section);
            assert_eq!((side.deleted, side.added, side.kept), (t.deleted, t.added, t.kept));
        }
        events.extend(detect_from_delta(delta, &dict, &filter));
    }
    events.sort();
    assert_eq!(events, out.truth.events);
    assert_eq!(events.len(), 21);
}

#[test]
fn confound_sections_produce_no_events() {
    let out = generate(&spec_with_everything()).unwrap();
    let (corpus, dict) = load(&out);
    let filter = FilterConfig::default();
    for c in &out.truth.confounds {
        let section = corpus.find_section(&c.note_id, c.section).unwrap();
        let events = termshift::transform::detect_events(section, &dict, &filter);
        assert!(
            !events.iter().any(|e| e.consumer_term == c.consumer_term),
            "{:?} fired in {} {}",
            c.kind,
            c.note_id,
            c.section
        );
    }
}

#[test]
fn diff_spans_match_truth_spans() {
    let out = generate(&spec_with_everything()).unwrap();
    let (corpus, dict) = load(&out);
    for truth in &out.truth.sections {
        let section = corpus.find_section(&truth.note_id, truth.section).unwrap();
        let diff = annotate(section, &dict);
        let got: BTreeSet<(u8, String, usize, usize)> =
            diff.spans.iter().map(|s| (s.side as u8, s.term.clone(), s.start, s.end)).collect();
        let want: BTreeSet<(u8, String, usize, usize)> =
            truth.spans.iter().map(|s| (s.side as u8, s.term.clone(), s.start, s.end)).collect();
        assert_eq!(got, want, "{} {}", truth.note_id, truth.section);
        assert_eq!(diff.counts.consumer_deleted, truth.consumer.deleted);
        assert_eq!(diff.counts.consumer_added, truth.consumer.added);
        assert_eq!(diff.counts.consumer_kept, truth.consumer.kept);
        assert_eq!(diff.counts.clinical_added, truth.clinical.added);
        assert_eq!(diff.counts.clinical_kept, truth.clinical.kept);
        assert_eq!(diff.counts.clinical_deleted, truth.clinical.deleted);
        let kept_tags = diff.spans.iter().filter(|s| s.category == Category::ConsumerKept).count() as u64;
        assert_eq!(kept_tags, 2 * truth.consumer.kept);
    }
}

#[test]
fn worker_count_does_not_change_deltas() {
    let out = generate(&SynthSpec::default()).unwrap();
    let (corpus, dict) = load(&out);
    let seq = corpus_deltas(&corpus, &dict, Parallelism::Sequential);
    let par = corpus_deltas(&corpus, &dict, Parallelism::Rayon);
    assert_eq!(seq, par);
}

#[test]
fn detector_bench_preset_is_exact() {
    let out = generate(&SynthSpec::detector_bench()).unwrap();
    let (corpus, dict) = load(&out);
    let filter = FilterConfig::default();
    let mut events: Vec<_> = corpus_deltas(&corpus, &dict, Parallelism::Rayon)
        .iter()
        .flat_map(|d| detect_from_delta(d, &dict, &filter))
        .collect();
    events.sort();
    assert_eq!(out.truth.events.len(), 500);
    assert_eq!(out.truth.confounds.len(), 500);
    assert_eq!(events, out.truth.events);
}

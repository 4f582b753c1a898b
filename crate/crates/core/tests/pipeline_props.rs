use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termshift::corpus::SectionLabel;
use termshift::dictionary::{build_entries, read_source_rows, ExclusionList};
use termshift::frequency::{
    aggregate_notes, corpus_deltas, percent_change, section_table, summarize_deltas, SectionMetrics, SectionTotals,
};
use termshift::synthgen::{generate, SynthOutput, SynthSpec};
use termshift::transform::{detect_from_delta, linguistic_filter, summarize_pairs, FilterConfig, TransformationEvent};
use termshift::{Corpus, DictionaryConfig, MappingEntry, Parallelism, TermDictionary};

fn load(out: &SynthOutput) -> (Corpus, TermDictionary) {
    let (corpus, _) = Corpus::ingest(&out.corpus_jsonl().unwrap()[..]).unwrap();
    let rows = read_source_rows(&out.dictionary_csv().unwrap()[..], Path::new("d.csv")).unwrap();
    let (entries, _) = build_entries(&rows, &ExclusionList::default(), None, &DictionaryConfig::default());
    (corpus, TermDictionary::from_entries(entries, None))
}

/// Whitespace-and-punctuation recount that ignores the library tokenizer:
/// words are lowercased alphanumeric runs with inner joiners kept.
fn recount(text: &str, terms: &BTreeSet<String>) -> BTreeMap<String, u64> {
    let chars: Vec<char> = text.chars().collect();
    let mut words: Vec<String> = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joiner = matches!(c, '-' | '\'' | '\u{2019}')
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joiner {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    let mut out = BTreeMap::new();
    for term in terms {
        let tt: Vec<&str> = term.split(' ').collect();
        let mut i = 0;
        while i + tt.len() <= words.len() {
            if words[i..i + tt.len()].iter().zip(&tt).all(|(a, b)| a == b) {
                *out.entry(term.clone()).or_insert(0) += 1;
                i += tt.len();
            } else {
                i += 1;
            }
        }
    }
    out
}

#[test]
fn frequency_counts_match_an_independent_recount() {
    let spec = SynthSpec { sections: 150, filler_pairs: 120, ..SynthSpec::default() };
    let out = generate(&spec).unwrap();
    let (corpus, dict) = load(&out);
    let consumer: BTreeSet<String> = dict.consumer_terms().cloned().collect();
    let deltas = corpus_deltas(&corpus, &dict, Parallelism::Rayon);
    for (section, delta) in corpus.sections().iter().zip(&deltas) {
        assert_eq!(delta.consumer.draft.per_term, recount(&section.draft_text, &consumer));
        assert_eq!(delta.consumer.final_.per_term, recount(&section.final_text, &consumer));
        assert_eq!(delta.clinical.final_.per_term, recount(&section.final_text, dict.clinical_terms()));
    }
}

#[test]
fn accounting_identities_hold_at_every_level() {
    let out = generate(&SynthSpec { sections: 500, ..SynthSpec::default() }).unwrap();
    let (corpus, dict) = load(&out);
    let deltas = corpus_deltas(&corpus, &dict, Parallelism::Rayon);
    for d in &deltas {
        for s in [&d.consumer, &d.clinical] {
            assert_eq!(s.kept + s.deleted, s.draft.total);
            assert_eq!(s.kept + s.added, s.final_.total);
            assert_eq!(s.change, s.added as i64 - s.deleted as i64);
        }
    }
    let notes = aggregate_notes(&deltas);
    let summary = summarize_deltas(&deltas);
    let note_draft: i64 = notes.iter().map(|n| n.consumer.draft_total as i64).sum();
    let note_final: i64 = notes.iter().map(|n| n.consumer.final_total as i64).sum();
    let section_draft: u64 = deltas.iter().map(|d| d.consumer.draft.total).sum();
    assert_eq!(note_draft as u64, summary.consumer.draft_total);
    assert_eq!(note_final as u64, summary.consumer.final_total);
    assert_eq!(section_draft, summary.consumer.draft_total);
    let clinical_change: i64 = notes.iter().map(|n| n.clinical.change).sum();
    assert_eq!(clinical_change, summary.clinical.total_change());
    assert_eq!(notes.iter().map(|n| n.sections).sum::<usize>(), deltas.len());
}

#[test]
fn adding_dictionary_entries_never_removes_events() {
    let out = generate(&SynthSpec::default()).unwrap();
    let (corpus, full) = load(&out);
    let filter = FilterConfig::default();
    let entries = full.entries().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut subset: Vec<MappingEntry> = entries.clone();
    subset.shuffle(&mut rng);
    subset.truncate(entries.len() / 2);
    subset.retain(|e| e.consumer_term != "high blood pressure");
    subset.push(entries.iter().find(|e| e.consumer_term == "high blood pressure").unwrap().clone());
    let small = TermDictionary::from_entries(subset, None);
    let events = |dict: &TermDictionary| -> BTreeSet<TransformationEvent> {
        corpus_deltas(&corpus, dict, Parallelism::Rayon)
            .iter()
            .flat_map(|d| detect_from_delta(d, dict, &filter))
            .collect()
    };
    let (few, many) = (events(&small), events(&full));
    assert!(few.is_subset(&many));
    assert!(!few.is_empty());
}

#[test]
fn linguistic_filter_is_idempotent() {
    let pairs: Vec<(String, String)> = [
        ("medications", "medication"),
        ("high blood pressure", "hypertension"),
        ("bp", "blood pressure"),
        ("some", "several"),
        ("running", "run"),
        ("sugar", "glucose"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let cfg = FilterConfig::default();
    let once = linguistic_filter(&pairs, &cfg);
    assert_eq!(linguistic_filter(&once, &cfg), once);
    assert_eq!(
        once,
        vec![
            ("high blood pressure".to_string(), "hypertension".to_string()),
            ("sugar".to_string(), "glucose".to_string())
        ]
    );
}

#[test]
fn record_order_does_not_change_the_corpus() {
    let out = generate(&SynthSpec { sections: 120, ..SynthSpec::default() }).unwrap();
    let (reference, _) = Corpus::ingest(&out.corpus_jsonl().unwrap()[..]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let mut records = out.records.clone();
        records.shuffle(&mut rng);
        let mut buf = Vec::new();
        for r in &records {
            serde_json::to_writer(&mut buf, r).unwrap();
            buf.push(b'\n');
        }
        let (corpus, _) = Corpus::ingest(&buf[..]).unwrap();
        assert_eq!(corpus, reference);
    }
}

fn event(note: usize, consumer: &str, clinical: &str) -> TransformationEvent {
    TransformationEvent {
        note_id: format!("N{note:03}"),
        section: SectionLabel::Hpi,
        consumer_term: consumer.into(),
        clinical_term: clinical.into(),
    }
}

#[test]
fn relevance_threshold_is_strict() {
    let mut events: Vec<TransformationEvent> = (0..10).map(|i| event(i, "sugar", "glucose")).collect();
    events.extend((0..11).map(|i| event(i, "therapy", "treatment")));
    let pairs = summarize_pairs(&events, 10, &FilterConfig::default());
    let flag: BTreeMap<&str, bool> =
        pairs.iter().map(|p| (p.consumer_term.as_str(), p.meets_relevance_threshold)).collect();
    assert!(!flag["sugar"]);
    assert!(flag["therapy"]);
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[test]
fn section_formulas_reproduce_published_aggregates() {
    let hpi =
        SectionTotals { sections: 34_569, consumer_deleted: 648_066, consumer_kept: 841_335, ..Default::default() };
    let m = SectionMetrics::from_totals(SectionLabel::Hpi, hpi).unwrap();
    assert!(((m.consumer_deleted_mean * 100.0).round() / 100.0 - 18.75).abs() < 0.05);
    assert!((round1(m.consumer_deletion_pct) - 43.5).abs() < 0.05);
    let results =
        SectionTotals { sections: 6_832, consumer_deleted: 35_940, consumer_kept: 13_192, ..Default::default() };
    let r = SectionMetrics::from_totals(SectionLabel::Results, results).unwrap();
    assert!((round1(r.consumer_deletion_pct) - 73.1).abs() < 0.05);
    assert!((round1(percent_change(3_814_042, 2_742_428).unwrap()) + 28.1).abs() < 0.05);
    assert!((round1(percent_change(4_511_917, 3_200_742).unwrap()) + 29.1).abs() < 0.05);
}

#[test]
fn section_table_has_the_four_analyzed_rows() {
    let out = generate(&SynthSpec::default()).unwrap();
    let (corpus, dict) = load(&out);
    let (rows, warnings) = section_table(&corpus_deltas(&corpus, &dict, Parallelism::Sequential));
    assert!(warnings.is_empty());
    let labels: Vec<SectionLabel> = rows.iter().map(|r| r.section).collect();
    assert_eq!(labels, SectionLabel::ANALYZED.to_vec());
}

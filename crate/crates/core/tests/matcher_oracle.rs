use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termshift::matcher::{term_tokens, tokenize};
use termshift::PhraseMatcher;

/// Character-level reference: a char belongs to a token if it is
/// alphanumeric, or a joiner with alphanumerics directly on both sides.
fn oracle_tokens(text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let inside: Vec<bool> = (0..chars.len())
        .map(|i| {
            let c = chars[i].1;
            if c.is_alphanumeric() {
                return true;
            }
            let joiner = c == '-' || c == '\'' || c == '\u{2019}';
            joiner
                && i > 0
                && chars[i - 1].1.is_alphanumeric()
                && i + 1 < chars.len()
                && chars[i + 1].1.is_alphanumeric()
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !inside[i] {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut word = String::new();
        while i < chars.len() && inside[i] {
            word.extend(chars[i].1.to_lowercase());
            i += 1;
        }
        let end = if i < chars.len() { chars[i].0 } else { text.len() };
        out.push((word, start, end));
    }
    out
}

/// Scans every start position against every term beginning with the token
/// found there; same-term matches are taken leftmost-first without overlap.
struct NaiveScan<'a> {
    terms: &'a [String],
    by_first: HashMap<String, Vec<(usize, Vec<String>)>>,
}

impl<'a> NaiveScan<'a> {
    fn new(terms: &'a [String]) -> Self {
        let mut by_first: HashMap<String, Vec<(usize, Vec<String>)>> = HashMap::new();
        for (i, t) in terms.iter().enumerate() {
            let tt: Vec<String> = oracle_tokens(t).into_iter().map(|x| x.0).collect();
            if let Some(first) = tt.first() {
                by_first.entry(first.clone()).or_default().push((i, tt));
            }
        }
        NaiveScan { terms, by_first }
    }

    fn counts(&self, text: &str) -> BTreeMap<String, u64> {
        let toks: Vec<String> = oracle_tokens(text).into_iter().map(|t| t.0).collect();
        let mut next_free: HashMap<usize, usize> = HashMap::new();
        let mut counts = BTreeMap::new();
        for start in 0..toks.len() {
            for (ti, tt) in self.by_first.get(&toks[start]).map(Vec::as_slice).unwrap_or(&[]) {
                if start < next_free.get(ti).copied().unwrap_or(0) || start + tt.len() > toks.len() {
                    continue;
                }
                if toks[start..start + tt.len()] == tt[..] {
                    next_free.insert(*ti, start + tt.len());
                    *counts.entry(self.terms[*ti].clone()).or_insert(0) += 1;
                }
            }
        }
        counts
    }
}

fn text_strategy() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[a-zA-Z0-9]{1,6}",
        Just("-".to_string()),
        Just("'".to_string()),
        Just("\u{2019}".to_string()),
        Just(" ".to_string()),
        Just(", ".to_string()),
        Just("--".to_string()),
        Just("É".to_string()),
        Just("ß".to_string()),
        Just("\t".to_string()),
        Just("&".to_string()),
    ];
    prop::collection::vec(piece, 0..30).prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn tokenizer_matches_character_oracle(text in text_strategy()) {
        let got: Vec<(String, usize, usize)> = tokenize(&text).into_iter().map(|s| (s.token, s.start, s.end)).collect();
        prop_assert_eq!(got, oracle_tokens(&text));
    }

    #[test]
    fn counting_ignores_case(text in text_strategy()) {
        let m = PhraseMatcher::new(["ab", "ab cd", "x-y", "don't"]);
        prop_assert_eq!(m.count_occurrences(&text), m.count_occurrences(&text.to_uppercase()));
    }
}

const SEPARATORS: &[&str] = &[" ", " ", " ", ", ", ". ", " - ", "; ", "\n", "  ", "-", "'"];

fn random_world(rng: &mut ChaCha8Rng, n_terms: usize) -> (Vec<String>, Vec<String>) {
    let syll = ["ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "do"];
    let vocab: Vec<String> =
        (0..700).map(|_| (0..rng.random_range(1..=3)).map(|_| *syll.choose(rng).unwrap()).collect()).collect();
    let mut terms: Vec<String> = (0..n_terms)
        .map(|_| {
            let len = [1, 1, 2, 2, 3, 4, 6][rng.random_range(0..7)];
            (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
        })
        .collect();
    terms.sort();
    terms.dedup();
    (vocab, terms)
}

fn random_text(rng: &mut ChaCha8Rng, vocab: &[String], terms: &[String]) -> String {
    let mut out = String::new();
    for _ in 0..rng.random_range(5..40) {
        let piece = if rng.random_bool(0.3) { terms.choose(rng).unwrap() } else { vocab.choose(rng).unwrap() };
        let piece = if rng.random_bool(0.1) { piece.to_uppercase() } else { piece.clone() };
        out.push_str(&piece);
        out.push_str(SEPARATORS.choose(rng).unwrap());
    }
    out
}

#[test]
fn two_stage_matcher_equals_naive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (vocab, terms) = random_world(&mut rng, 7_000);
    assert!(terms.len() >= 5_000);
    let mut freq: HashMap<String, u64> = HashMap::new();
    for v in &vocab {
        freq.insert(v.clone(), rng.random_range(1..100));
    }
    let plain = PhraseMatcher::new(&terms);
    let anchored = PhraseMatcher::with_token_frequencies(&terms, &freq);
    let oracle = NaiveScan::new(&terms);
    for _ in 0..10_000 {
        let text = random_text(&mut rng, &vocab, &terms);
        let a = plain.count_occurrences(&text);
        assert_eq!(a, anchored.count_occurrences(&text));
        assert_eq!(a.per_term, oracle.counts(&text), "{text:?}");
    }
}

#[test]
fn small_dictionary_equals_naive_scan_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (vocab, terms) = random_world(&mut rng, 60);
    let vocab: Vec<String> = vocab.into_iter().take(40).collect();
    let m = PhraseMatcher::new(&terms);
    let oracle = NaiveScan::new(&terms);
    for _ in 0..5_000 {
        let text = random_text(&mut rng, &vocab, &terms);
        assert_eq!(m.count_occurrences(&text).per_term, oracle.counts(&text), "{text:?}");
    }
}

#[test]
fn no_substring_leakage() {
    let m = PhraseMatcher::new(["tension", "pressure", "sugar", "flu shot", "afib"]);
    let text = "hypertension blood-pressure sugary sugarless flu-shot flushot afibrillation pre-afib's tensions";
    let counts = m.count_occurrences(text);
    assert_eq!(counts.total, 0, "{:?}", counts.per_term);
}

#[test]
fn match_spans_cover_the_source_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (vocab, terms) = random_world(&mut rng, 300);
    let m = PhraseMatcher::new(&terms);
    for _ in 0..500 {
        let text = random_text(&mut rng, &vocab, &terms);
        for hit in m.find_matches(&tokenize(&text)) {
            let slice = &text[hit.start..hit.end];
            assert_eq!(term_tokens(slice), term_tokens(&hit.term));
        }
    }
}

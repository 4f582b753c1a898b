//! Boundary-aware, case-insensitive term matching.
//!
//! Text is first split into tokens (maximal alphanumeric runs, with `'` and
//! `-` allowed inside a token only between two alphanumerics). A term
//! matches when its token sequence occurs consecutively in the text's token
//! sequence, so a term can never match inside a longer token.
//!
//! Single-token terms are found by a direct token lookup. Multi-token terms
//! are indexed under one anchor token, the rarest of their tokens; an anchor
//! hit yields a candidate start position which is then verified against the
//! full token sequence.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// One token of a source text. Offsets are byte offsets into that text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Splits `text` into lowercased tokens.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut current: Option<TokenSpan> = None;

    while let Some((idx, c)) = chars.next() {
        if c.is_alphanumeric() {
            let span = current.get_or_insert_with(|| TokenSpan { token: String::new(), start: idx, end: idx });
            span.token.extend(c.to_lowercase());
            span.end = idx + c.len_utf8();
            continue;
        }
        // A joiner continues the token only if an alphanumeric follows and
        // the token is already open (so the preceding char was alphanumeric).
        if is_joiner(c) {
            if let Some(span) = current.as_mut() {
                if span.end == idx && chars.peek().is_some_and(|&(_, n)| n.is_alphanumeric()) {
                    span.token.push(c);
                    span.end = idx + c.len_utf8();
                    continue;
                }
            }
        }
        if let Some(span) = current.take() {
            spans.push(span);
        }
    }
    if let Some(span) = current.take() {
        spans.push(span);
    }
    spans
}

/// Token texts of a term, using the same rule as [`tokenize`].
pub fn term_tokens(term: &str) -> Vec<String> {
    tokenize(term).into_iter().map(|s| s.token).collect()
}

/// Occurrence counts for a set of terms over one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    /// Only terms with a count of at least one are stored.
    pub per_term: BTreeMap<String, u64>,
    pub total: u64,
    pub unique: u64,
}

impl TermCounts {
    pub fn from_map(per_term: BTreeMap<String, u64>) -> Self {
        let per_term: BTreeMap<String, u64> = per_term.into_iter().filter(|(_, c)| *c > 0).collect();
        let total = per_term.values().sum();
        let unique = per_term.len() as u64;
        TermCounts { per_term, total, unique }
    }

    pub fn get(&self, term: &str) -> u64 {
        self.per_term.get(term).copied().unwrap_or(0)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.get(term) > 0
    }

    pub fn present(&self) -> BTreeSet<String> {
        self.per_term.keys().cloned().collect()
    }
}

/// A verified occurrence of one term in a tokenized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub term: String,
    /// Token index range `[token_start, token_end)`.
    pub token_start: usize,
    pub token_end: usize,
    /// Byte range in the source text.
    pub start: usize,
    pub end: usize,
}

const NO_ID: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Pattern {
    tokens: Box<[u32]>,
    /// Term ids sharing this token sequence.
    terms: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    pattern: u32,
    /// Position of the anchor token inside the pattern.
    offset: u32,
}

/// Compiled matcher for one set of normalized terms.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    terms: Vec<String>,
    token_ids: HashMap<String, u32>,
    token_names: Vec<String>,
    patterns: Vec<Pattern>,
    /// token id -> single-token pattern id
    single: Vec<u32>,
    /// token id -> multi-token patterns anchored on it
    anchors: Vec<Vec<Anchor>>,
}

impl PhraseMatcher {
    /// Builds a matcher; anchor tokens are chosen by frequency across the
    /// term set itself.
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build(terms, None)
    }

    /// Builds a matcher whose anchor for each multi-token term is the token
    /// with the lowest frequency in `token_freq` (first such token on ties).
    /// Tokens missing from the map count as frequency 0.
    pub fn with_token_frequencies<I, S>(terms: I, token_freq: &HashMap<String, u64>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build(terms, Some(token_freq))
    }

    fn build<I, S>(terms: I, token_freq: Option<&HashMap<String, u64>>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: Vec<String> =
            terms.into_iter().map(|t| t.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();

        let mut token_ids: HashMap<String, u32> = HashMap::new();
        let mut token_names: Vec<String> = Vec::new();
        let mut by_sequence: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();

        for (term_id, term) in terms.iter().enumerate() {
            let tokens = term_tokens(term);
            if tokens.is_empty() {
                continue;
            }
            let ids: Vec<u32> = tokens
                .into_iter()
                .map(|tok| {
                    let next = token_names.len() as u32;
                    *token_ids.entry(tok.clone()).or_insert_with(|| {
                        token_names.push(tok);
                        next
                    })
                })
                .collect();
            let pid = *by_sequence.entry(ids.clone()).or_insert_with(|| {
                patterns.push(Pattern { tokens: ids.into_boxed_slice(), terms: Vec::new() });
                (patterns.len() - 1) as u32
            });
            patterns[pid as usize].terms.push(term_id as u32);
        }

        let local_freq: Vec<u64> = match token_freq {
            Some(freq) => token_names.iter().map(|t| freq.get(t).copied().unwrap_or(0)).collect(),
            None => {
                let mut f = vec![0u64; token_names.len()];
                for p in &patterns {
                    for &t in p.tokens.iter() {
                        f[t as usize] += 1;
                    }
                }
                f
            }
        };

        let mut single = vec![NO_ID; token_names.len()];
        let mut anchors: Vec<Vec<Anchor>> = vec![Vec::new(); token_names.len()];
        for (pid, p) in patterns.iter().enumerate() {
            if p.tokens.len() == 1 {
                single[p.tokens[0] as usize] = pid as u32;
                continue;
            }
            let (offset, &anchor) = p
                .tokens
                .iter()
                .enumerate()
                .min_by_key(|&(i, &t)| (local_freq[t as usize], i))
                .expect("multi-token pattern");
            anchors[anchor as usize].push(Anchor { pattern: pid as u32, offset: offset as u32 });
        }

        PhraseMatcher { terms, token_ids, token_names, patterns, single, anchors }
    }

    /// Distinct terms known to this matcher, sorted.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Anchor token -> multi-token terms that are verified from it.
    pub fn rare_token_index(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (tid, list) in self.anchors.iter().enumerate() {
            for a in list {
                let entry = out.entry(self.token_names[tid].clone()).or_default();
                for &term in &self.patterns[a.pattern as usize].terms {
                    entry.push(self.terms[term as usize].clone());
                }
            }
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    fn encode(&self, spans: &[TokenSpan]) -> Vec<u32> {
        spans.iter().map(|s| self.token_ids.get(s.token.as_str()).copied().unwrap_or(NO_ID)).collect()
    }

    /// Pattern-level matches: (pattern id, token start, token end), grouped
    /// by discovery position. Same-pattern matches never overlap.
    fn pattern_matches(&self, ids: &[u32]) -> Vec<(u32, usize, usize)> {
        let mut out = Vec::new();
        let mut last_end: HashMap<u32, usize> = HashMap::new();
        let n = ids.len();
        for (i, &tok) in ids.iter().enumerate() {
            if tok == NO_ID {
                continue;
            }
            let pid = self.single[tok as usize];
            if pid != NO_ID {
                out.push((pid, i, i + 1));
            }
            for a in &self.anchors[tok as usize] {
                let offset = a.offset as usize;
                if i < offset {
                    continue;
                }
                let start = i - offset;
                let pattern = &self.patterns[a.pattern as usize];
                let end = start + pattern.tokens.len();
                if end > n || ids[start..end] != *pattern.tokens {
                    continue;
                }
                let prev = last_end.entry(a.pattern).or_insert(0);
                if start >= *prev {
                    *prev = end;
                    out.push((a.pattern, start, end));
                }
            }
        }
        out
    }

    /// Counts every term over an already tokenized text.
    pub fn count_tokens(&self, spans: &[TokenSpan]) -> TermCounts {
        let ids = self.encode(spans);
        let mut per_pattern: HashMap<u32, u64> = HashMap::new();
        for (pid, _, _) in self.pattern_matches(&ids) {
            *per_pattern.entry(pid).or_insert(0) += 1;
        }
        let mut per_term = BTreeMap::new();
        for (pid, count) in per_pattern {
            for &term in &self.patterns[pid as usize].terms {
                per_term.insert(self.terms[term as usize].clone(), count);
            }
        }
        TermCounts::from_map(per_term)
    }

    /// Counts every term in `text`. Each term is counted independently;
    /// repeated occurrences of the same term are counted leftmost-first
    /// without overlap.
    pub fn count_occurrences(&self, text: &str) -> TermCounts {
        self.count_tokens(&tokenize(text))
    }

    /// Terms with at least one occurrence in `text`.
    pub fn term_presence(&self, text: &str) -> BTreeSet<String> {
        self.count_occurrences(text).present()
    }

    /// All verified occurrences, ordered by (token_start, term).
    pub fn find_matches(&self, spans: &[TokenSpan]) -> Vec<TermMatch> {
        let ids = self.encode(spans);
        let mut out: Vec<TermMatch> = self
            .pattern_matches(&ids)
            .into_iter()
            .flat_map(|(pid, s, e)| self.patterns[pid as usize].terms.iter().map(move |&term| (term, s, e)))
            .map(|(term, s, e)| TermMatch {
                term: self.terms[term as usize].clone(),
                token_start: s,
                token_end: e,
                start: spans[s].start,
                end: spans[e - 1].end,
            })
            .collect();
        out.sort_by(|a, b| (a.token_start, &a.term).cmp(&(b.token_start, &b.term)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|s| s.token).collect()
    }

    #[test]
    fn tokenizer_edge_cases() {
        assert_eq!(toks("right-sided pain."), vec!["right-sided", "pain"]);
        assert_eq!(toks("A&P"), vec!["a", "p"]);
        assert_eq!(toks("Has afib."), vec!["has", "afib"]);
        assert_eq!(toks("patient's -leg- don't"), vec!["patient's", "leg", "don't"]);
        assert_eq!(toks("a--b c-"), vec!["a", "b", "c"]);
        assert_eq!(toks("C5-C7"), vec!["c5-c7"]);
        assert!(toks("  ... ").is_empty());
    }

    #[test]
    fn spans_index_source_bytes() {
        let text = "Héllo, wörld";
        let spans = tokenize(text);
        assert_eq!(&text[spans[0].start..spans[0].end], "Héllo");
        assert_eq!(&text[spans[1].start..spans[1].end], "wörld");
        assert_eq!(spans[0].token, "héllo");
    }

    #[test]
    fn phrase_and_single_counts() {
        let m = PhraseMatcher::new(["high blood pressure", "tension", "pressure"]);
        let c = m.count_occurrences("patient has HIGH blood pressure; hypertension noted");
        assert_eq!(c.get("high blood pressure"), 1);
        assert_eq!(c.get("pressure"), 1);
        assert_eq!(c.get("tension"), 0);
        assert_eq!(c.total, 2);
        assert_eq!(c.unique, 2);
    }

    #[test]
    fn same_term_overlap_is_leftmost_non_overlapping() {
        let m = PhraseMatcher::new(["a a"]);
        assert_eq!(m.count_occurrences("a a a").get("a a"), 1);
        assert_eq!(m.count_occurrences("a a a a").get("a a"), 2);
    }

    #[test]
    fn phrase_crosses_punctuation() {
        let m = PhraseMatcher::new(["flu shot"]);
        assert_eq!(m.count_occurrences("flu, shot").get("flu shot"), 1);
        assert_eq!(m.count_occurrences("flu-shot").get("flu shot"), 0);
    }

    #[test]
    fn presence() {
        let m = PhraseMatcher::new(["sugar", "glucose"]);
        let p = m.term_presence("sugar is high");
        assert_eq!(p.into_iter().collect::<Vec<_>>(), vec!["sugar".to_string()]);
        assert!(m.term_presence("").is_empty());
    }

    #[test]
    fn anchor_is_rarest_token() {
        let mut freq = HashMap::new();
        freq.insert("high".to_string(), 50);
        freq.insert("blood".to_string(), 3);
        freq.insert("pressure".to_string(), 3);
        let m = PhraseMatcher::with_token_frequencies(["high blood pressure"], &freq);
        let idx = m.rare_token_index();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx["blood"], vec!["high blood pressure".to_string()]);
    }

    #[test]
    fn terms_with_equal_token_sequences_are_both_counted() {
        let m = PhraseMatcher::new(["a&p", "a p"]);
        let c = m.count_occurrences("reviewed A/P today");
        assert_eq!(c.get("a&p"), 1);
        assert_eq!(c.get("a p"), 1);
    }

    #[test]
    fn find_matches_reports_byte_ranges() {
        let text = "Sugar, then high  blood pressure";
        let m = PhraseMatcher::new(["sugar", "high blood pressure"]);
        let found = m.find_matches(&tokenize(text));
        assert_eq!(found.len(), 2);
        assert_eq!(&text[found[0].start..found[0].end], "Sugar");
        assert_eq!(&text[found[1].start..found[1].end], "high  blood pressure");
    }
}

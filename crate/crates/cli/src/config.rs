//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use sha2::{Digest, Sha256};
use termshift::cluster::ZeroChangeDefinition;
use termshift::stats::ZeroMethod;

use crate::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub corpus: Option<PathBuf>,
    /// Prebuilt dictionary cache (JSONL). Takes precedence over `sources`.
    pub dictionary: Option<PathBuf>,
    pub sources: Vec<PathBuf>,
    pub exclude: Vec<PathBuf>,
    pub vocabulary_filter: bool,
    pub min_term_chars: usize,
    pub min_length_both_sides: bool,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub relevance_threshold: u64,
    pub eligibility_threshold: usize,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub stop_list: Option<PathBuf>,
    pub zero_change: ZeroChangeDefinition,
    pub zero_method: ZeroMethod,
    pub parallel: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            corpus: None,
            dictionary: None,
            sources: Vec::new(),
            exclude: Vec::new(),
            vocabulary_filter: false,
            min_term_chars: 4,
            min_length_both_sides: false,
            min_tokens: 1,
            max_tokens: 6,
            relevance_threshold: 10,
            eligibility_threshold: 10,
            k: 3,
            seed: 20240601,
            restarts: 10,
            stop_list: None,
            zero_change: ZeroChangeDefinition::Both,
            zero_method: ZeroMethod::Wilcox,
            parallel: true,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("{key}: expected a boolean, got {value:?}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| anyhow::anyhow!("{key}: expected a non-negative integer, got {value:?}"))
}

fn path_list(value: &str) -> Vec<PathBuf> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl AnalysisConfig {
    pub const KEYS: [&'static str; 19] = [
        "corpus",
        "dictionary",
        "sources",
        "exclude",
        "vocabulary_filter",
        "min_term_chars",
        "min_length_both_sides",
        "min_tokens",
        "max_tokens",
        "relevance_threshold",
        "eligibility_threshold",
        "k",
        "seed",
        "restarts",
        "stop_list",
        "zero_change",
        "zero_method",
        "parallel",
        "out_dir",
    ];

    /// Applies one setting. `out_dir` is accepted but handled by the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "corpus" => self.corpus = opt_path(value),
            "dictionary" => self.dictionary = opt_path(value),
            "sources" => self.sources = path_list(value),
            "exclude" => self.exclude = path_list(value),
            "vocabulary_filter" => self.vocabulary_filter = parse_bool(key, value)?,
            "min_term_chars" => self.min_term_chars = parse_num(key, value)?,
            "min_length_both_sides" => self.min_length_both_sides = parse_bool(key, value)?,
            "min_tokens" => self.min_tokens = parse_num(key, value)?,
            "max_tokens" => self.max_tokens = parse_num(key, value)?,
            "relevance_threshold" => self.relevance_threshold = parse_num(key, value)?,
            "eligibility_threshold" => self.eligibility_threshold = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "restarts" => self.restarts = parse_num(key, value)?,
            "stop_list" => self.stop_list = opt_path(value),
            "zero_change" => {
                self.zero_change = match value {
                    "both" => ZeroChangeDefinition::Both,
                    "consumer_only" | "consumer-only" => ZeroChangeDefinition::ConsumerOnly,
                    _ => bail!("zero_change: expected both or consumer_only, got {value:?}"),
                }
            }
            "zero_method" => {
                self.zero_method = match value {
                    "wilcox" => ZeroMethod::Wilcox,
                    "pratt" => ZeroMethod::Pratt,
                    _ => bail!("zero_method: expected wilcox or pratt, got {value:?}"),
                }
            }
            "parallel" => self.parallel = parse_bool(key, value)?,
            "out_dir" => {}
            _ => bail!("unknown configuration key {key:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_tokens < 1 || self.max_tokens > 6 || self.min_tokens > self.max_tokens {
            bail!("token range must satisfy 1 <= min_tokens <= max_tokens <= 6");
        }
        if self.min_term_chars == 0 || self.relevance_threshold == 0 || self.eligibility_threshold == 0 {
            bail!("thresholds must be positive");
        }
        if self.k == 0 || self.restarts == 0 {
            bail!("k and restarts must be positive");
        }
        Ok(())
    }

    /// Canonical `key=value` lines in key order; the output directory is
    /// not part of the configuration identity.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let zero_change = match self.zero_change {
            ZeroChangeDefinition::Both => "both",
            ZeroChangeDefinition::ConsumerOnly => "consumer_only",
        };
        let zero_method = match self.zero_method {
            ZeroMethod::Wilcox => "wilcox",
            ZeroMethod::Pratt => "pratt",
        };
        BTreeMap::from([
            ("corpus", show_path(&self.corpus)),
            ("dictionary", show_path(&self.dictionary)),
            ("sources", join_paths(&self.sources)),
            ("exclude", join_paths(&self.exclude)),
            ("vocabulary_filter", self.vocabulary_filter.to_string()),
            ("min_term_chars", self.min_term_chars.to_string()),
            ("min_length_both_sides", self.min_length_both_sides.to_string()),
            ("min_tokens", self.min_tokens.to_string()),
            ("max_tokens", self.max_tokens.to_string()),
            ("relevance_threshold", self.relevance_threshold.to_string()),
            ("eligibility_threshold", self.eligibility_threshold.to_string()),
            ("k", self.k.to_string()),
            ("seed", self.seed.to_string()),
            ("restarts", self.restarts.to_string()),
            ("stop_list", show_path(&self.stop_list)),
            ("zero_change", zero_change.to_string()),
            ("zero_method", zero_method.to_string()),
            ("parallel", self.parallel.to_string()),
        ])
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Parses a config file into ordered `(key, value)` pairs. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        let key = k.trim();
        if !AnalysisConfig::KEYS.contains(&key) {
            bail!("line {}: unknown key {key:?}", i + 1);
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Loads `path`, returning the config and the `out_dir` entry if present.
pub fn load(path: &Path) -> Result<(AnalysisConfig, Option<PathBuf>)> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = AnalysisConfig::default();
    let mut out_dir = None;
    for (k, v) in parse_file(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))? {
        if k == "out_dir" {
            out_dir = opt_path(&v);
        }
        cfg.set(&k, &v).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    Ok((cfg, out_dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let pairs = parse_file("# comment\nk = 4\nsources = a.csv, b.csv\n\nzero_change = consumer_only\n").unwrap();
        let mut cfg = AnalysisConfig::default();
        for (k, v) in &pairs {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.sources, vec![PathBuf::from("a.csv"), PathBuf::from("b.csv")]);
        assert_eq!(cfg.zero_change, ZeroChangeDefinition::ConsumerOnly);
        cfg.set("k", "3").unwrap();
        assert_eq!(cfg.k, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_file("nonsense").is_err());
        assert!(parse_file("colour = red").is_err());
        let mut cfg = AnalysisConfig::default();
        assert!(cfg.set("k", "-1").is_err());
        cfg.set("max_tokens", "7").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = AnalysisConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.seed += 1;
        assert_ne!(a.sha256(), b.sha256());
    }
}

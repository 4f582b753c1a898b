//! Report files plus the manifest that pins them down.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Percentages and other one-decimal figures.
pub fn fmt1(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.1}"))
}

pub fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

pub fn fmt_p(p: Option<f64>) -> String {
    match p {
        None => String::new(),
        Some(p) if p < 0.001 => "<0.001".to_string(),
        Some(p) => format!("{p:.3}"),
    }
}

/// Writes report files into one directory and remembers their hashes.
pub struct OutputSet {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(OutputSet { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut bytes = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut bytes, r)?;
            bytes.push(b'\n');
        }
        self.write(name, &bytes)
    }

    /// CSV with a fixed header, written even when there are no rows.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            debug_assert_eq!(r.len(), header.len());
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: BTreeMap<String, String>,
    pub corpus_sha256: Option<String>,
    pub dictionary_sha256: Option<String>,
    pub seed: u64,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, config_sha256: String, seed: u64) -> Self {
        Manifest {
            tool: "termshift",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256,
            config,
            corpus_sha256: None,
            dictionary_sha256: None,
            seed,
            outputs: BTreeMap::new(),
        }
    }

    /// Records the hashes of everything in `out` and writes the manifest
    /// beside them.
    pub fn finish(mut self, out: &mut OutputSet, name: &str) -> Result<()> {
        self.outputs = out.files().clone();
        out.json(name, &self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_p(Some(0.0004)), "<0.001");
        assert_eq!(fmt_p(Some(0.0831)), "0.083");
        assert_eq!(fmt_p(None), "");
        assert_eq!(fmt1(Some(-28.099)), "-28.1");
        assert_eq!(fmt2(18.7472), "18.75");
    }

    #[test]
    fn empty_csv_keeps_its_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::create(dir.path()).unwrap();
        out.csv("t.csv", &["a", "b"], &[]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap(), "a,b\n");
        assert_eq!(out.files().len(), 1);
    }
}

//! Text formats: indexed example lines, namespaced raw lines and batch directories.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::hashing::{hash_conjunction, hash_feature, validate_namespace, HashConfig};
use crate::model::{Batch, Example, Label, SparseVector};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_label(tok: &str, line: usize) -> Result<Label> {
    match tok {
        "0" => Ok(Label::ZERO),
        "1" => Ok(Label::ONE),
        other => Err(parse_err(line, format!("label must be 0 or 1, got {other:?}"))),
    }
}

/// Parses `<label> <index>:<value> ...` with single-space separators and sorted indices.
pub fn parse_indexed_line(text: &str, line: usize) -> Result<Example> {
    let mut tokens = text.split(' ');
    let label = parse_label(tokens.next().unwrap_or(""), line)?;
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("malformed feature token {tok:?}")))?;
        if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
            return Err(parse_err(line, format!("malformed index in {tok:?}")));
        }
        let idx: u32 = idx
            .parse()
            .map_err(|_| parse_err(line, format!("index out of range in {tok:?}")))?;
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(line, format!("malformed value in {tok:?}")))?;
        if !val.is_finite() || val == 0.0 {
            return Err(parse_err(line, format!("value must be finite and nonzero in {tok:?}")));
        }
        if let Some(&(prev, _)) = entries.last() {
            if idx == prev {
                return Err(parse_err(line, format!("duplicate index {idx}")));
            }
            if idx < prev {
                return Err(parse_err(line, format!("unsorted index {idx} after {prev}")));
            }
        }
        entries.push((idx, val));
    }
    let features = SparseVector::new(entries).map_err(|e| parse_err(line, e.to_string()))?;
    Ok(Example::new(features, label))
}

/// Canonical indexed form of an example.
pub fn format_example(example: &Example) -> String {
    let mut out = example.label.to_string();
    for &(i, v) in example.features.entries() {
        out.push(' ');
        out.push_str(&i.to_string());
        out.push(':');
        out.push_str(&v.to_string());
    }
    out
}

/// A namespaced record before hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub label: Label,
    pub tokens: Vec<(String, String)>,
}

/// Parses `<label> |<ns> <tok> <tok> |<ns2> <tok> ...`.
pub fn parse_namespaced_line(text: &str, line: usize) -> Result<RawRecord> {
    let (head, rest) = text.split_once('|').ok_or_else(|| parse_err(line, "missing namespace section"))?;
    let label = parse_label(head.trim_end(), line)?;
    let mut tokens = Vec::new();
    for section in rest.split('|') {
        let mut words = section.split_whitespace();
        let ns = words.next().ok_or_else(|| parse_err(line, "empty namespace section"))?;
        validate_namespace(ns).map_err(|e| parse_err(line, e.to_string()))?;
        if section.starts_with(char::is_whitespace) {
            return Err(parse_err(line, "namespace must follow '|' directly"));
        }
        for tok in words {
            tokens.push((ns.to_string(), tok.to_string()));
        }
    }
    Ok(RawRecord { label, tokens })
}

impl RawRecord {
    /// Hashes every token (value 1) plus the configured conjunctions. Collisions add.
    pub fn to_example(&self, cfg: &HashConfig) -> Result<Example> {
        let mut entries: Vec<(u32, f64)> = self
            .tokens
            .iter()
            .map(|(ns, tok)| (hash_feature(ns, tok, cfg), 1.0))
            .collect();
        for (ns_a, ns_b) in &cfg.conjunctions {
            for (na, ta) in self.tokens.iter().filter(|(n, _)| n == ns_a) {
                for (nb, tb) in self.tokens.iter().filter(|(n, _)| n == ns_b) {
                    entries.push((hash_conjunction(na, ta, nb, tb, cfg), 1.0));
                }
            }
        }
        Ok(Example::new(SparseVector::from_unsorted(entries)?, self.label))
    }
}

/// Parses one line in either format. Namespaced lines require a hash configuration.
pub fn parse_line(text: &str, line: usize, hash: Option<&HashConfig>) -> Result<Example> {
    if text.contains('|') {
        let cfg = hash.ok_or_else(|| parse_err(line, "namespaced input requires hash bits"))?;
        parse_namespaced_line(text, line)?.to_example(cfg)
    } else {
        parse_indexed_line(text, line)
    }
}

/// Reads one example per line. Blank lines are not allowed.
pub fn read_examples(path: &Path, hash: Option<&HashConfig>) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.push(parse_line(&line, n + 1, hash).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn batch_file_name(t: usize) -> String {
    format!("batch_{t:05}.txt")
}

fn batch_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("batch_")?.strip_suffix(".txt")?;
    if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Lists `batch_NNNNN.txt` files in time order, requiring indices `0..n`.
pub fn list_batch_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(t) = entry.file_name().to_str().and_then(batch_index) {
            found.push((t, entry.path()));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no batch files found"),
        });
    }
    for (expected, (t, _)) in found.iter().enumerate() {
        if *t != expected {
            return Err(Error::Sequencing {
                expected,
                got: *t,
            });
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Reads every batch in `dir`.
pub fn read_batch_dir(dir: &Path, hash: Option<&HashConfig>) -> Result<Vec<Batch>> {
    list_batch_files(dir)?
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let examples = read_examples(p, hash)?;
            if examples.is_empty() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::InvalidData, "batch file is empty"),
                });
            }
            Batch::new(t, examples)
        })
        .collect()
}

pub fn write_examples<W: Write>(mut out: W, examples: &[Example]) -> std::io::Result<()> {
    for e in examples {
        out.write_all(format_example(e).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes each batch as `batch_NNNNN.txt` under `dir`, creating it if needed.
pub fn write_batch_dir(dir: &Path, batches: &[Batch]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for b in batches {
        let path = dir.join(batch_file_name(b.time_index));
        let tmp = path.with_extension("txt.tmp");
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        write_examples(BufWriter::new(file), b.examples()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

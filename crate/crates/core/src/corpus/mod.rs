//! Corpora of diff-message pairs: the source database exemplars are
//! retrieved from, and the train/test splits evaluated against.
//!
//! JSONL is the interchange format, one object per line:
//!
//! ```text
//! {"id": str?, "repo": str?, "timestamp": int?, "lang": str?, "diff": str, "message": str}
//! ```
//!
//! Keys outside that schema are kept in [`DiffMessagePair::extra`] and written
//! back out unchanged.

mod filter;
pub mod git;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::count_tokens;

pub use filter::{filter_corpus, FilterConfig, FilterReport};
pub use git::{ingest_git_records, GitRecord};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("line {line}: {cause}")]
    Malformed { line: usize, cause: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid filter configuration: {0}")]
    InvalidFilter(String),
    #[error("git log: {0}")]
    GitLog(String),
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMessagePair {
    pub id: String,
    #[serde(default)]
    pub repo: String,
    /// Commit time in seconds since the epoch, 0 when unknown.
    #[serde(default)]
    pub timestamp: i64,
    #[serde(rename = "diff")]
    pub diff_text: String,
    #[serde(rename = "message")]
    pub message_text: String,
    #[serde(rename = "lang", default, skip_serializing_if = "Option::is_none")]
    pub language_tag: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl DiffMessagePair {
    pub fn new(id: impl Into<String>, diff: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            repo: String::new(),
            timestamp: 0,
            diff_text: diff.into(),
            message_text: message.into(),
            language_tag: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_repo(mut self, repo: impl Into<String>) -> Self {
        self.repo = repo.into();
        self
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// The `author` key carried in [`extra`](Self::extra), if any.
    pub fn author(&self) -> Option<&str> {
        self.extra.get("author").and_then(Value::as_str)
    }
}

/// Line shape accepted by the loader; `id` is optional on input.
#[derive(Deserialize)]
struct JsonlLine {
    id: Option<String>,
    repo: Option<String>,
    timestamp: Option<i64>,
    lang: Option<String>,
    diff: String,
    message: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// An ordered, id-indexed collection of pairs. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: Vec<DiffMessagePair>,
    index_by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_entries(entries: Vec<DiffMessagePair>) -> Result<Self, CorpusError> {
        let mut index_by_id = HashMap::with_capacity(entries.len());
        for (ordinal, entry) in entries.iter().enumerate() {
            if index_by_id.insert(entry.id.clone(), ordinal).is_some() {
                return Err(CorpusError::DuplicateId(entry.id.clone()));
            }
        }
        Ok(Self { entries, index_by_id })
    }

    pub fn entries(&self) -> &[DiffMessagePair] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&DiffMessagePair> {
        self.entries.get(ordinal)
    }

    pub fn ordinal_of(&self, id: &str) -> Option<usize> {
        self.index_by_id.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&DiffMessagePair> {
        self.ordinal_of(id).map(|i| &self.entries[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DiffMessagePair> {
        self.entries.iter()
    }

    pub fn into_entries(self) -> Vec<DiffMessagePair> {
        self.entries
    }

    /// id → author for entries that carry an `author` key.
    pub fn authors(&self) -> HashMap<String, String> {
        self.entries
            .iter()
            .filter_map(|e| e.author().map(|a| (e.id.clone(), a.to_string())))
            .collect()
    }

    pub fn write_jsonl_to(&self, mut out: impl Write) -> io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let wrap = |source| CorpusError::Write { path: path.to_path_buf(), source };
        let file = fs::File::create(path).map_err(wrap)?;
        self.write_jsonl_to(BufWriter::new(file)).map_err(wrap)
    }

    /// SHA-256 of the canonical JSONL serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.entries {
            hasher.update(serde_json::to_vec(entry).expect("pairs always serialize"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a DiffMessagePair;
    type IntoIter = std::slice::Iter<'a, DiffMessagePair>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// Parses JSONL bytes. Blank lines are ignored; any other line that is not
/// a valid object fails the whole load with its 1-based line number.
pub fn parse_jsonl(bytes: &[u8]) -> Result<Corpus, CorpusError> {
    let mut entries = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = idx + 1;
        let text = std::str::from_utf8(raw).map_err(|_| CorpusError::InvalidUtf8 { line })?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: JsonlLine = serde_json::from_str(text)
            .map_err(|e| CorpusError::Malformed { line, cause: e.to_string() })?;
        entries.push(DiffMessagePair {
            id: parsed.id.unwrap_or_else(|| line.to_string()),
            repo: parsed.repo.unwrap_or_default(),
            timestamp: parsed.timestamp.unwrap_or(0),
            diff_text: parsed.diff,
            message_text: parsed.message,
            language_tag: parsed.lang,
            extra: parsed.extra,
        });
    }
    Corpus::from_entries(entries)
}

pub fn load_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Read { path: path.to_path_buf(), source })?;
    parse_jsonl(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub avg_message_tokens: f64,
    pub avg_diff_tokens: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let count = corpus.len();
    if count == 0 {
        return CorpusStats { count, avg_message_tokens: 0.0, avg_diff_tokens: 0.0 };
    }
    let (msg, diff) = corpus.iter().fold((0usize, 0usize), |(m, d), e| {
        (m + count_tokens(&e.message_text), d + count_tokens(&e.diff_text))
    });
    CorpusStats {
        count,
        avg_message_tokens: msg as f64 / count as f64,
        avg_diff_tokens: diff as f64 / count as f64,
    }
}

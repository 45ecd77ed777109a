//! Commit records mined from version-control history.
//!
//! Extraction (spawning `git`) is the caller's job; this module only parses
//! log output and maps records onto corpus entries.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, DiffMessagePair};

/// `git log --format` string whose output [`parse_log`] understands.
pub const LOG_FORMAT: &str = "%H%x1f%an <%ae>%x1f%ct%x1f%B%x1e";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GitRecord {
    pub hash: String,
    pub author: String,
    pub timestamp: i64,
    pub message: String,
    pub diff: String,
}

/// Header fields of one commit, as produced by [`LOG_FORMAT`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitHeader {
    pub hash: String,
    pub author: String,
    pub timestamp: i64,
    pub message: String,
}

impl CommitHeader {
    pub fn with_diff(self, diff: String) -> GitRecord {
        GitRecord {
            hash: self.hash,
            author: self.author,
            timestamp: self.timestamp,
            message: self.message,
            diff,
        }
    }
}

pub fn parse_log(output: &str) -> Result<Vec<CommitHeader>, CorpusError> {
    output
        .split('\x1e')
        .map(|chunk| chunk.trim_start_matches(['\n', '\r']))
        .filter(|chunk| !chunk.is_empty())
        .map(|chunk| {
            let mut fields = chunk.splitn(4, '\x1f');
            let (Some(hash), Some(author), Some(ts), Some(body)) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(CorpusError::GitLog(format!("truncated record: {:?}", truncate(chunk, 60))));
            };
            let timestamp = ts
                .trim()
                .parse()
                .map_err(|_| CorpusError::GitLog(format!("bad timestamp {ts:?} for {hash}")))?;
            Ok(CommitHeader {
                hash: hash.trim().to_string(),
                author: author.to_string(),
                timestamp,
                message: body.trim_end().to_string(),
            })
        })
        .collect()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// One entry per record, id = commit hash. The author is kept under the
/// `author` key so bot filtering still works after a JSONL round trip.
pub fn ingest_git_records(records: &[GitRecord], repo: &str) -> Result<Corpus, CorpusError> {
    let mut seen = HashSet::with_capacity(records.len());
    let mut entries = Vec::with_capacity(records.len());
    for rec in records {
        if !seen.insert(rec.hash.as_str()) {
            return Err(CorpusError::DuplicateId(rec.hash.clone()));
        }
        let mut extra = BTreeMap::new();
        extra.insert("author".to_string(), Value::String(rec.author.clone()));
        entries.push(DiffMessagePair {
            id: rec.hash.clone(),
            repo: repo.to_string(),
            timestamp: rec.timestamp,
            diff_text: rec.diff.clone(),
            message_text: rec.message.clone(),
            language_tag: None,
            extra,
        });
    }
    Corpus::from_entries(entries)
}

/// `owner/name` from a remote URL such as `git@github.com:owner/name.git`
/// or `https://github.com/owner/name`.
pub fn repo_slug_from_remote(url: &str) -> Option<String> {
    let url = url.trim().trim_end_matches('/');
    let url = url.strip_suffix(".git").unwrap_or(url);
    let path = match url.split_once("://") {
        Some((_, rest)) => rest.split_once('/')?.1,
        None => url.rsplit_once(':')?.1,
    };
    let mut parts = path.rsplit('/');
    let name = parts.next().filter(|s| !s.is_empty())?;
    let owner = parts.next().filter(|s| !s.is_empty())?;
    Some(format!("{owner}/{name}"))
}

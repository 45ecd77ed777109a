//! Inverted index over diff text and BM25 scoring.
//!
//! Persisted as a `.idx` JSONL file: a header line
//! `{"format":"react-cmg-idx","version":1,"n":<docs>,"avgdl":<f64>}`, a line
//! `{"ids":[...],"doc_lengths":[...]}`, then one `{"t":<term>,"p":[[ordinal,tf],...]}`
//! line per term in lexicographic order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RetrieveError;
use crate::corpus::Corpus;
use crate::text::{tokenize, TokenSequence};

pub const INDEX_FORMAT: &str = "react-cmg-idx";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(RetrieveError::InvalidOptions(format!(
                "BM25 needs k1 >= 0 and 0 <= b <= 1, got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

/// `(ordinal, term frequency)`, sorted by ordinal.
pub type Posting = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    ids: Vec<String>,
    avgdl: f64,
}

/// Unique terms in order of first appearance.
pub(crate) fn unique_terms(query: &TokenSequence) -> Vec<&str> {
    let mut seen = HashSet::new();
    query.iter().filter(|t| seen.insert(*t)).collect()
}

/// ln(1 + (N − df + 0.5)/(df + 0.5))
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(params: &Bm25Params, idf: f64, tf: f64, dl: f64, avgdl: f64) -> f64 {
    let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

pub fn build_index(corpus: &Corpus) -> InvertedIndex {
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for (ordinal, entry) in corpus.iter().enumerate() {
        let tokens = tokenize(&entry.diff_text);
        doc_lengths.push(tokens.len() as u32);
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens.iter() {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term.to_string()).or_default().push((ordinal as u32, count));
        }
    }
    let avgdl = if doc_lengths.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
    };
    InvertedIndex {
        postings,
        doc_lengths,
        ids: corpus.iter().map(|e| e.id.clone()).collect(),
        avgdl,
    }
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_length(&self, ordinal: usize) -> usize {
        self.doc_lengths[ordinal] as usize
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True when built over exactly the corpus ids, in order.
    pub fn matches(&self, corpus: &Corpus) -> bool {
        self.ids.len() == corpus.len() && corpus.iter().zip(&self.ids).all(|(e, id)| &e.id == id)
    }

    pub fn bm25_score(&self, params: &Bm25Params, query: &TokenSequence, ordinal: usize) -> f64 {
        let dl = self.doc_lengths[ordinal] as f64;
        unique_terms(query)
            .into_iter()
            .map(|term| {
                let list = self.postings(term);
                match list.binary_search_by_key(&(ordinal as u32), |p| p.0) {
                    Ok(pos) => {
                        let idf = idf(self.n_docs(), list.len());
                        term_weight(params, idf, list[pos].1 as f64, dl, self.avgdl)
                    }
                    Err(_) => 0.0,
                }
            })
            .sum()
    }

    /// BM25 of every document, accumulated through the postings lists.
    /// Term contributions are added in the same order as [`bm25_score`],
    /// so both give bit-identical results.
    ///
    /// [`bm25_score`]: Self::bm25_score
    pub fn score_all(&self, params: &Bm25Params, query: &TokenSequence) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs()];
        for term in unique_terms(query) {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = idf(self.n_docs(), list.len());
            for &(ordinal, tf) in list {
                let dl = self.doc_lengths[ordinal as usize] as f64;
                scores[ordinal as usize] += term_weight(params, idf, tf as f64, dl, self.avgdl);
            }
        }
        scores
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        let header = serde_json::json!({
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "n": self.n_docs(),
            "avgdl": self.avgdl,
        });
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        serde_json::to_writer(&mut out, &DocsLine { ids: self.ids.clone(), doc_lengths: self.doc_lengths.clone() })?;
        out.write_all(b"\n")?;
        for (term, list) in &self.postings {
            serde_json::to_writer(&mut out, &TermLine { t: term.clone(), p: list.clone() })?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrieveError> {
        let err = |e: std::io::Error| RetrieveError::IndexFile(format!("{}: {e}", path.display()));
        let file = fs::File::create(path).map_err(err)?;
        self.write_to(BufWriter::new(file)).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, RetrieveError> {
        let err = |m: String| RetrieveError::IndexFile(format!("{}: {m}", path.display()));
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = |what: &str| -> Result<String, RetrieveError> {
            lines
                .next()
                .ok_or_else(|| err(format!("missing {what}")))?
                .map_err(|e| err(e.to_string()))
        };
        let header: IndexHeader =
            serde_json::from_str(&next_line("header")?).map_err(|e| err(format!("bad header: {e}")))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(err(format!("unsupported format {} v{}", header.format, header.version)));
        }
        let docs: DocsLine =
            serde_json::from_str(&next_line("document table")?).map_err(|e| err(format!("bad document table: {e}")))?;
        if docs.ids.len() != header.n || docs.doc_lengths.len() != header.n {
            return Err(err("document table does not match header".into()));
        }
        let mut postings = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            let row: TermLine = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 3)))?;
            if row.p.iter().any(|&(o, _)| o as usize >= header.n) {
                return Err(err(format!("line {}: ordinal out of range", n + 3)));
            }
            postings.insert(row.t, row.p);
        }
        Ok(Self { postings, doc_lengths: docs.doc_lengths, ids: docs.ids, avgdl: header.avgdl })
    }
}

#[derive(Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    n: usize,
    avgdl: f64,
}

#[derive(Serialize, Deserialize)]
struct DocsLine {
    ids: Vec<String>,
    doc_lengths: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    t: String,
    p: Vec<Posting>,
}

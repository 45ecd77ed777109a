//! Precomputed corpus embeddings, persisted as a `.emb` JSONL sidecar.
//!
//! The first line is a header object
//! `{"format":"react-cmg-emb","version":1,"provider":<tag>,"dim":256,"count":<n>}`;
//! each following line is `{"id":<str>,"v":[<256 floats>]}` in corpus order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EMBEDDING_DIM};
use crate::corpus::Corpus;
use crate::par;

pub const STORE_FORMAT: &str = "react-cmg-emb";
pub const STORE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    provider: String,
    dim: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    provider_tag: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    position: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position.get(id).map(|&i| self.vectors[i].as_slice())
    }

    /// Vector of the `ordinal`-th stored entry.
    pub fn at(&self, ordinal: usize) -> &[f64] {
        &self.vectors[ordinal]
    }

    /// True when the store holds exactly the corpus ids, in corpus order.
    pub fn matches(&self, corpus: &Corpus) -> bool {
        self.ids.len() == corpus.len() && corpus.iter().zip(&self.ids).all(|(e, id)| &e.id == id)
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        let header = Header {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            provider: self.provider_tag.clone(),
            dim: EMBEDDING_DIM,
            count: self.ids.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            serde_json::to_writer(&mut out, &Row { id: id.clone(), v: v.clone() })?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let err = |e: std::io::Error| EmbedError::Store { path: path.display().to_string(), message: e.to_string() };
        let file = fs::File::create(path).map_err(err)?;
        self.write_to(BufWriter::new(file)).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let err = |message: String| EmbedError::Store { path: path.display().to_string(), message };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines.next().ok_or_else(|| err("empty file".into()))?.map_err(|e| err(e.to_string()))?;
        let header: Header = serde_json::from_str(&header_line).map_err(|e| err(format!("bad header: {e}")))?;
        if header.format != STORE_FORMAT || header.version != STORE_VERSION {
            return Err(err(format!("unsupported format {} v{}", header.format, header.version)));
        }
        if header.dim != EMBEDDING_DIM {
            return Err(err(format!("dimension {} != {EMBEDDING_DIM}", header.dim)));
        }
        let mut ids = Vec::with_capacity(header.count);
        let mut vectors = Vec::with_capacity(header.count);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            let row: Row = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 2)))?;
            if row.v.len() != EMBEDDING_DIM {
                return Err(err(format!("line {}: {} dimensions", n + 2, row.v.len())));
            }
            ids.push(row.id);
            vectors.push(row.v);
        }
        if ids.len() != header.count {
            return Err(err(format!("header says {} rows, found {}", header.count, ids.len())));
        }
        Self::from_parts(header.provider, ids, vectors).map_err(|m| err(m))
    }

    fn from_parts(provider_tag: String, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, String> {
        let mut position = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if position.insert(id.clone(), i).is_some() {
                return Err(format!("duplicate id {id:?}"));
            }
        }
        Ok(Self { provider_tag, ids, vectors, position })
    }
}

/// Embeds every diff of `corpus` with up to `workers` concurrent calls.
/// Results are stored in corpus order, so the output never depends on
/// scheduling.
pub fn build_store(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    workers: usize,
) -> Result<EmbeddingStore, EmbedError> {
    let results = par::map_ordered(corpus.entries(), workers, |_, entry| provider.embed(&entry.diff_text));
    let mut vectors = Vec::with_capacity(corpus.len());
    for (entry, result) in corpus.iter().zip(results) {
        let v = result.map_err(|e| EmbedError::Entry { id: entry.id.clone(), source: Box::new(e) })?;
        vectors.push(v.into_values());
    }
    let ids = corpus.iter().map(|e| e.id.clone()).collect();
    Ok(EmbeddingStore::from_parts(provider.tag().to_string(), ids, vectors).expect("corpus ids are unique"))
}

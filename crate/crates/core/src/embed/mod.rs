//! Dense 256-dimensional diff embeddings behind a pluggable provider.
//!
//! Two providers ship: [`LocalHashEmbedder`], a deterministic signed
//! feature-hashing bag of words that needs no network, and
//! [`RemoteEmbedder`], which calls an OpenAI-style `/embeddings` endpoint.
//! Every vector is L2-normalized except the all-zero vector of empty text.

mod remote;
mod store;

use thiserror::Error;
use xxhash_rust::xxh64::xxh64;

use crate::http::HttpError;
use crate::text::tokenize;

pub use remote::{embed_remote, EmbeddingEndpointConfig, RemoteEmbedder};
pub use store::{build_store, EmbeddingStore, STORE_FORMAT, STORE_VERSION};

pub const EMBEDDING_DIM: usize = 256;
pub const LOCAL_PROVIDER_TAG: &str = "local-hash-v1";
const HASH_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("malformed embeddings response: {0}")]
    BadResponse(String),
    #[error("API key missing: set {0}")]
    MissingApiKey(String),
    #[error("embedding entry {id:?}: {source}")]
    Entry { id: String, source: Box<EmbedError> },
    #[error("store {path}: {message}")]
    Store { path: String, message: String },
    #[error("store was built by provider {store:?}, query embedder is {query:?}")]
    ProviderMismatch { store: String, query: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_tag: String,
}

impl EmbeddingVector {
    /// L2-normalizes `raw`; a zero vector stays zero.
    pub fn normalized(mut raw: Vec<f64>, provider_tag: impl Into<String>) -> Self {
        let norm = l2_norm(&raw);
        if norm > 0.0 {
            raw.iter_mut().for_each(|v| *v /= norm);
        }
        Self { values: raw, provider_tag: provider_tag.into() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub trait EmbeddingProvider: Send + Sync {
    fn tag(&self) -> &str;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

pub fn embed_local(text: &str) -> EmbeddingVector {
    let mut raw = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(text).iter() {
        let h = xxh64(token.as_bytes(), HASH_SEED);
        let bucket = (h % EMBEDDING_DIM as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        raw[bucket] += sign;
    }
    EmbeddingVector::normalized(raw, LOCAL_PROVIDER_TAG)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalHashEmbedder;

impl EmbeddingProvider for LocalHashEmbedder {
    fn tag(&self) -> &str {
        LOCAL_PROVIDER_TAG
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(embed_local(text))
    }
}

/// Cosine similarity of two equal-length slices; 0 when either is zero.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_slices(&a.values, &b.values)
}

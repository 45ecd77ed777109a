//! Retrieval-augmented commit message generation.
//!
//! The pipeline runs in three phases. First, retrieve the most similar
//! diff-message pair from a source database using fused BM25 and embedding
//! similarity ([`retriever`]). Second, augment the query diff with that
//! exemplar, either as a special-token concatenation for fine-tuned models or
//! as a one-shot chat prompt ([`augment`]). Third, generate the message
//! through a chat-completion endpoint ([`generate`]). [`metrics`] and
//! [`harness`] score generated messages and run ablations over retrieval
//! variants.

pub mod augment;
pub mod corpus;
pub mod embed;
pub mod generate;
pub mod harness;
pub mod http;
pub mod metrics;
mod par;
pub mod retriever;
pub mod synth;
#[doc(hidden)]
pub mod stub;
pub mod text;

/// Environment variable holding the bearer token for remote endpoints.
pub const API_KEY_ENV: &str = "REACT_CMG_API_KEY";

pub use corpus::{Corpus, DiffMessagePair};
pub use embed::{EmbeddingProvider, EmbeddingVector};

/// Portable seeded generator used wherever runs must be reproducible.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

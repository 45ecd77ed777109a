//! Exemplar retrieval: BM25 and embedding cosine, min-max normalized over a
//! candidate pool, fused by a weighted mean, with a guard against returning
//! the query's own pair.

mod index;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, DiffMessagePair};
use crate::embed::{cosine_slices, EmbedError, EmbeddingProvider, EmbeddingStore};
use crate::text::tokenize;

pub use index::{build_index, idf, Bm25Params, InvertedIndex, Posting, INDEX_FORMAT, INDEX_VERSION};

#[derive(Debug, Error)]
pub enum RetrieveError {
    /// Restrictions and the leakage guard left nothing to return.
    #[error("no candidates left after applying retrieval restrictions")]
    NoCandidates,
    #[error("invalid retrieval options: {0}")]
    InvalidOptions(String),
    #[error("index, store and corpus disagree: {0}")]
    Inconsistent(String),
    #[error("index file {0}")]
    IndexFile(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridWeights {
    pub w_lex: f64,
    pub w_sem: f64,
}

impl Default for HybridWeights {
    fn default() -> Self {
        Self { w_lex: 1.0, w_sem: 1.0 }
    }
}

impl HybridWeights {
    pub const LEXICAL: Self = Self { w_lex: 1.0, w_sem: 0.0 };
    pub const SEMANTIC: Self = Self { w_lex: 0.0, w_sem: 1.0 };

    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(self.w_lex >= 0.0 && self.w_sem >= 0.0 && self.w_lex + self.w_sem > 0.0) {
            return Err(RetrieveError::InvalidOptions(format!(
                "weights must be non-negative with a positive sum, got ({}, {})",
                self.w_lex, self.w_sem
            )));
        }
        Ok(())
    }

    pub fn fuse(&self, lex: f64, sem: f64) -> f64 {
        (self.w_lex * lex + self.w_sem * sem) / (self.w_lex + self.w_sem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalOptions {
    pub k: usize,
    pub exclude_exact: bool,
    /// Only retrieve from this repository.
    pub project_filter: Option<String>,
    /// Only retrieve commits strictly older than this timestamp.
    pub before_timestamp: Option<i64>,
    /// Candidates taken from each retriever; 0 scans the whole corpus.
    pub pool_size: usize,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self { k: 1, exclude_exact: true, project_filter: None, before_timestamp: None, pool_size: 64 }
    }
}

impl RetrievalOptions {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if self.k < 1 {
            return Err(RetrieveError::InvalidOptions("k must be at least 1".into()));
        }
        if self.pool_size != 0 && self.pool_size < self.k + 1 {
            return Err(RetrieveError::InvalidOptions(format!(
                "pool_size must be 0 or at least k+1 = {}",
                self.k + 1
            )));
        }
        Ok(())
    }

    fn admits(&self, entry: &DiffMessagePair) -> bool {
        self.project_filter.as_deref().map_or(true, |repo| entry.repo == repo)
            && self.before_timestamp.map_or(true, |ts| entry.timestamp < ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub id: String,
    pub ordinal: usize,
    pub bm25_raw: f64,
    pub cosine_raw: f64,
    pub bm25_norm: f64,
    pub cosine_norm: f64,
    pub hybrid: f64,
}

/// Raw scores of one pool member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawScores {
    pub ordinal: usize,
    pub bm25: f64,
    pub cosine: f64,
}

fn min_max(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    move |x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }
}

/// Descending hybrid score, ties to the lower ordinal.
pub fn rank_order(a: &RetrievalCandidate, b: &RetrievalCandidate) -> Ordering {
    b.hybrid.partial_cmp(&a.hybrid).unwrap_or(Ordering::Equal).then(a.ordinal.cmp(&b.ordinal))
}

/// Min-max normalizes both score columns over `pool`, fuses them and sorts.
/// A column that is constant over the pool normalizes to 0 everywhere.
pub fn rank_pool(pool: &[RawScores], weights: &HybridWeights, ids: impl Fn(usize) -> String) -> Vec<RetrievalCandidate> {
    let norm_lex = min_max(pool.iter().map(|r| r.bm25));
    let norm_sem = min_max(pool.iter().map(|r| r.cosine));
    let mut ranked: Vec<_> = pool
        .iter()
        .map(|r| {
            let (bm25_norm, cosine_norm) = (norm_lex(r.bm25), norm_sem(r.cosine));
            RetrievalCandidate {
                id: ids(r.ordinal),
                ordinal: r.ordinal,
                bm25_raw: r.bm25,
                cosine_raw: r.cosine,
                bm25_norm,
                cosine_norm,
                hybrid: weights.fuse(bm25_norm, cosine_norm),
            }
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked
}

/// Diff equality used by the leakage guard: byte equality after trimming
/// trailing whitespace from every line and from the end of the text.
pub fn same_diff(a: &str, b: &str) -> bool {
    let canon = |s: &str| s.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim_end().to_string();
    canon(a) == canon(b)
}

/// Top `pool_size` ordinals by each score, merged and sorted by ordinal.
fn select_pool(eligible: &[usize], bm25: &[f64], cosine: &[f64], pool_size: usize) -> Vec<usize> {
    if pool_size == 0 || eligible.len() <= pool_size {
        return eligible.to_vec();
    }
    let top = |scores: &[f64]| {
        let mut order = eligible.to_vec();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        order.truncate(pool_size);
        order
    };
    let mut pool = top(bm25);
    pool.extend(top(cosine));
    pool.sort_unstable();
    pool.dedup();
    pool
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Bm25Only,
    DenseOnly,
    Hybrid,
    Random { seed: u64 },
}

impl RetrievalMode {
    /// Fusion weights of the ranked modes; `None` for random.
    pub fn weights(&self, hybrid: HybridWeights) -> Option<HybridWeights> {
        match self {
            Self::Bm25Only => Some(HybridWeights::LEXICAL),
            Self::DenseOnly => Some(HybridWeights::SEMANTIC),
            Self::Hybrid => Some(hybrid),
            Self::Random { .. } => None,
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bm25Only => f.write_str("bm25"),
            Self::DenseOnly => f.write_str("dense"),
            Self::Hybrid => f.write_str("hybrid"),
            Self::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bm25" | "bm25-only" => Ok(Self::Bm25Only),
            "dense" | "dense-only" | "encoder" => Ok(Self::DenseOnly),
            "hybrid" => Ok(Self::Hybrid),
            other => match other.strip_prefix("random") {
                Some("") => Ok(Self::Random { seed: 0 }),
                Some(rest) => rest
                    .strip_prefix(':')
                    .and_then(|seed| seed.parse().ok())
                    .map(|seed| Self::Random { seed })
                    .ok_or_else(|| format!("bad random seed in {s:?}")),
                None => Err(format!("unknown retrieval mode {s:?}")),
            },
        }
    }
}

/// A source database ready for querying: corpus, its index and its
/// embeddings, plus the embedder used for query diffs. Read-only and
/// shareable across threads.
pub struct Retriever<'a> {
    corpus: &'a Corpus,
    index: &'a InvertedIndex,
    store: &'a EmbeddingStore,
    embedder: &'a dyn EmbeddingProvider,
    params: Bm25Params,
}

impl<'a> Retriever<'a> {
    pub fn new(
        corpus: &'a Corpus,
        index: &'a InvertedIndex,
        store: &'a EmbeddingStore,
        embedder: &'a dyn EmbeddingProvider,
        params: Bm25Params,
    ) -> Result<Self, RetrieveError> {
        params.validate()?;
        if !index.matches(corpus) {
            return Err(RetrieveError::Inconsistent("index was built over a different corpus".into()));
        }
        if !store.matches(corpus) {
            return Err(RetrieveError::Inconsistent("embedding store does not cover the corpus ids in order".into()));
        }
        if store.provider_tag() != embedder.tag() {
            return Err(EmbedError::ProviderMismatch {
                store: store.provider_tag().to_string(),
                query: embedder.tag().to_string(),
            }
            .into());
        }
        Ok(Self { corpus, index, store, embedder, params })
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn embedder_tag(&self) -> &str {
        self.embedder.tag()
    }

    fn eligible(&self, opts: &RetrievalOptions) -> Vec<usize> {
        (0..self.corpus.len()).filter(|&i| opts.admits(&self.corpus.entries()[i])).collect()
    }

    /// Raw BM25 and cosine of the query against every corpus entry.
    pub fn raw_scores(&self, query_diff: &str) -> Result<(Vec<f64>, Vec<f64>), RetrieveError> {
        let bm25 = self.index.score_all(&self.params, &tokenize(query_diff));
        let q = self.embedder.embed(query_diff)?;
        let cosine = (0..self.corpus.len())
            .map(|i| cosine_slices(q.values(), self.store.at(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((bm25, cosine))
    }

    pub fn retrieve(
        &self,
        query_diff: &str,
        weights: &HybridWeights,
        opts: &RetrievalOptions,
    ) -> Result<Vec<RetrievalCandidate>, RetrieveError> {
        weights.validate()?;
        opts.validate()?;
        let eligible = self.eligible(opts);
        if eligible.is_empty() {
            return Err(RetrieveError::NoCandidates);
        }
        let (bm25, cosine) = self.raw_scores(query_diff)?;
        let pool: Vec<RawScores> = select_pool(&eligible, &bm25, &cosine, opts.pool_size)
            .into_iter()
            .map(|ordinal| RawScores { ordinal, bm25: bm25[ordinal], cosine: cosine[ordinal] })
            .collect();
        let ranked = rank_pool(&pool, weights, |o| self.corpus.entries()[o].id.clone());
        let survivors: Vec<_> = ranked
            .into_iter()
            .filter(|c| !(opts.exclude_exact && same_diff(&self.corpus.entries()[c.ordinal].diff_text, query_diff)))
            .take(opts.k)
            .collect();
        if survivors.is_empty() {
            return Err(RetrieveError::NoCandidates);
        }
        Ok(survivors)
    }

    /// Uniform draw of up to `k` distinct eligible entries from `rng`,
    /// still honoring the leakage guard. Normalized and hybrid scores are 0.
    pub fn retrieve_random(
        &self,
        query_diff: &str,
        rng: &mut impl Rng,
        opts: &RetrievalOptions,
    ) -> Result<Vec<RetrievalCandidate>, RetrieveError> {
        opts.validate()?;
        let eligible: Vec<usize> = self
            .eligible(opts)
            .into_iter()
            .filter(|&i| !(opts.exclude_exact && same_diff(&self.corpus.entries()[i].diff_text, query_diff)))
            .collect();
        if eligible.is_empty() {
            return Err(RetrieveError::NoCandidates);
        }
        let picks = rand::seq::index::sample(rng, eligible.len(), opts.k.min(eligible.len()));
        let q_tokens = tokenize(query_diff);
        let q_vec = self.embedder.embed(query_diff)?;
        picks
            .into_iter()
            .map(|p| {
                let ordinal = eligible[p];
                Ok(RetrievalCandidate {
                    id: self.corpus.entries()[ordinal].id.clone(),
                    ordinal,
                    bm25_raw: self.index.bm25_score(&self.params, &q_tokens, ordinal),
                    cosine_raw: cosine_slices(q_vec.values(), self.store.at(ordinal))?,
                    bm25_norm: 0.0,
                    cosine_norm: 0.0,
                    hybrid: 0.0,
                })
            })
            .collect()
    }

    /// Ablation entry point. Random mode seeds a fresh generator per call;
    /// use [`retrieve_random`](Self::retrieve_random) to share one stream.
    pub fn retrieve_mode(
        &self,
        query_diff: &str,
        mode: RetrievalMode,
        hybrid: HybridWeights,
        opts: &RetrievalOptions,
    ) -> Result<Vec<RetrievalCandidate>, RetrieveError> {
        match mode.weights(hybrid) {
            Some(w) => self.retrieve(query_diff, &w, opts),
            None => {
                let RetrievalMode::Random { seed } = mode else { unreachable!() };
                self.retrieve_random(query_diff, &mut crate::seeded_rng(seed), opts)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{build_store, LocalHashEmbedder};

    struct Fixture {
        corpus: Corpus,
        index: InvertedIndex,
        store: EmbeddingStore,
    }

    impl Fixture {
        fn new(entries: Vec<DiffMessagePair>) -> Self {
            let corpus = Corpus::from_entries(entries).unwrap();
            let index = build_index(&corpus);
            let store = build_store(&corpus, &LocalHashEmbedder, 1).unwrap();
            Self { corpus, index, store }
        }

        fn retriever(&self) -> Retriever<'_> {
            Retriever::new(&self.corpus, &self.index, &self.store, &LocalHashEmbedder, Bm25Params::default()).unwrap()
        }
    }

    fn two_docs() -> Fixture {
        Fixture::new(vec![
            DiffMessagePair::new("d1", "fix null pointer exception", "fix npe"),
            DiffMessagePair::new("d2", "add unit tests", "add tests"),
        ])
    }

    #[test]
    fn leakage_guard_promotes_second() {
        let f = two_docs();
        let r = f.retriever();
        let got = r.retrieve("fix null pointer exception  \n", &HybridWeights::default(), &RetrievalOptions::default()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, "d2");

        let opts = RetrievalOptions { exclude_exact: false, ..Default::default() };
        assert_eq!(r.retrieve("fix null pointer exception", &HybridWeights::default(), &opts).unwrap()[0].id, "d1");
    }

    #[test]
    fn tie_goes_to_lower_ordinal() {
        let pool = [
            RawScores { ordinal: 3, bm25: 5.0, cosine: 0.1 },
            RawScores { ordinal: 7, bm25: 1.0, cosine: 0.9 },
        ];
        let ranked = rank_pool(&pool, &HybridWeights::default(), |o| o.to_string());
        assert_eq!((ranked[0].bm25_norm, ranked[0].cosine_norm), (1.0, 0.0));
        assert_eq!(ranked[0].hybrid, ranked[1].hybrid);
        assert_eq!(ranked[0].ordinal, 3);
    }

    #[test]
    fn equal_weights_are_the_mean() {
        assert!((HybridWeights::default().fuse(0.8, 0.6) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let pool = [
            RawScores { ordinal: 0, bm25: 2.0, cosine: 0.5 },
            RawScores { ordinal: 1, bm25: 2.0, cosine: 0.7 },
        ];
        let ranked = rank_pool(&pool, &HybridWeights::default(), |o| o.to_string());
        assert!(ranked.iter().all(|c| c.bm25_norm == 0.0));
        assert_eq!(ranked[0].ordinal, 1);
    }

    #[test]
    fn restrictions_and_no_candidates() {
        let f = Fixture::new(vec![
            DiffMessagePair::new("a", "fix parser crash", "m1").with_repo("x/one").with_timestamp(10),
            DiffMessagePair::new("b", "fix parser bug", "m2").with_repo("x/two").with_timestamp(20),
            DiffMessagePair::new("c", "update docs", "m3").with_repo("x/two").with_timestamp(30),
        ]);
        let r = f.retriever();
        let opts = RetrievalOptions { project_filter: Some("x/two".into()), k: 2, ..Default::default() };
        let got = r.retrieve("fix parser crash", &HybridWeights::default(), &opts).unwrap();
        assert!(got.iter().all(|c| f.corpus.by_id(&c.id).unwrap().repo == "x/two"));

        let opts = RetrievalOptions { before_timestamp: Some(25), k: 2, ..Default::default() };
        let got = r.retrieve("fix parser crash", &HybridWeights::default(), &opts).unwrap();
        assert_eq!(got.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["b"]);

        let opts = RetrievalOptions { project_filter: Some("nobody/none".into()), ..Default::default() };
        assert!(matches!(r.retrieve("q", &HybridWeights::default(), &opts), Err(RetrieveError::NoCandidates)));
    }

    #[test]
    fn bm25_mode_equals_lexical_weights() {
        let f = two_docs();
        let r = f.retriever();
        let opts = RetrievalOptions { k: 2, ..Default::default() };
        assert_eq!(
            r.retrieve_mode("fix tests", RetrievalMode::Bm25Only, HybridWeights::default(), &opts).unwrap(),
            r.retrieve("fix tests", &HybridWeights::LEXICAL, &opts).unwrap()
        );
    }

    #[test]
    fn random_mode_is_seeded_and_guarded() {
        let f = Fixture::new((0..30).map(|i| DiffMessagePair::new(format!("e{i}"), format!("change {i}"), "m")).collect());
        let r = f.retriever();
        let opts = RetrievalOptions::default();
        let mode = RetrievalMode::Random { seed: 42 };
        let a = r.retrieve_mode("change 3", mode, HybridWeights::default(), &opts).unwrap();
        let b = r.retrieve_mode("change 3", mode, HybridWeights::default(), &opts).unwrap();
        assert_eq!(a, b);
        for seed in 0..200 {
            let got = r.retrieve_mode("change 3", RetrievalMode::Random { seed }, HybridWeights::default(), &opts).unwrap();
            assert_ne!(got[0].id, "e3");
        }
    }

    #[test]
    fn option_validation() {
        assert!(RetrievalOptions { k: 0, ..Default::default() }.validate().is_err());
        assert!(RetrievalOptions { k: 64, pool_size: 64, ..Default::default() }.validate().is_err());
        assert!(RetrievalOptions { k: 64, pool_size: 0, ..Default::default() }.validate().is_ok());
        assert!(HybridWeights { w_lex: 0.0, w_sem: 0.0 }.validate().is_err());
    }

    #[test]
    fn inconsistent_inputs_are_rejected() {
        let f = two_docs();
        let other = Corpus::from_entries(vec![DiffMessagePair::new("zz", "x", "y")]).unwrap();
        assert!(Retriever::new(&other, &f.index, &f.store, &LocalHashEmbedder, Bm25Params::default()).is_err());
    }

    #[test]
    fn mode_strings() {
        for s in ["bm25", "dense", "hybrid", "random:42"] {
            assert_eq!(s.parse::<RetrievalMode>().unwrap().to_string(), s);
        }
        assert!("random:x".parse::<RetrievalMode>().is_err());
        assert!("nope".parse::<RetrievalMode>().is_err());
    }
}

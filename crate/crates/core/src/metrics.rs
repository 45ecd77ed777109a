//! BLEU-4, ROUGE-L and METEOR over the shared tokenizer.
//!
//! BLEU is corpus-level (n-gram counts pooled over all items). ROUGE-L and
//! METEOR are sentence-level and averaged. Reports carry percentages.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{porter_stem, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("no items to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Adds one to the matched and total count of every n-gram order.
    AddOne,
}

const MAX_N: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn check_lengths<H, R>(hyps: &[H], refs: &[R]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Corpus BLEU-4 as a percentage.
pub fn bleu4_with<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], smoothing: Smoothing) -> Result<f64, MetricError> {
    check_lengths(hyps, refs)?;
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let h = tokenize(h.as_ref()).into_vec();
        let r = tokenize(r.as_ref()).into_vec();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_N {
            let ref_counts = ngram_counts(&r, n);
            for (gram, count) in ngram_counts(&h, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        let (m, t) = match smoothing {
            Smoothing::None => (matched[n] as f64, total[n] as f64),
            Smoothing::AddOne => (matched[n] as f64 + 1.0, total[n] as f64 + 1.0),
        };
        if m == 0.0 || t == 0.0 {
            return Ok(0.0);
        }
        log_sum += (m / t).ln();
    }
    let geo_mean = (log_sum / MAX_N as f64).exp();
    let bp = if hyp_len <= ref_len { (1.0 - ref_len as f64 / hyp_len as f64).exp() } else { 1.0 };
    Ok((100.0 * bp * geo_mean).clamp(0.0, 100.0))
}

pub fn bleu4<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<f64, MetricError> {
    bleu4_with(hyps, refs, Smoothing::None)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Sentence ROUGE-L F1 in [0, 1].
pub fn rouge_l(hypothesis: &str, reference: &str) -> f64 {
    let h = tokenize(hypothesis).into_vec();
    let r = tokenize(reference).into_vec();
    let l = lcs_len(&h, &r) as f64;
    let p = if h.is_empty() { 0.0 } else { l / h.len() as f64 };
    let rec = if r.is_empty() { 0.0 } else { l / r.len() as f64 };
    if p + rec == 0.0 {
        0.0
    } else {
        2.0 * p * rec / (p + rec)
    }
}

const METEOR_ALPHA: f64 = 0.9;
const METEOR_BETA: f64 = 3.0;
const METEOR_GAMMA: f64 = 0.5;

/// Unigram alignment as (hyp index, ref index) pairs sorted by hyp index.
/// Stage one pairs exact matches, stage two pairs equal Porter stems among
/// the leftovers. In both stages each hypothesis token, left to right, takes
/// the leftmost unused reference token that qualifies.
fn meteor_alignment(h: &[String], r: &[String]) -> Vec<(usize, usize)> {
    let mut hyp_used = vec![false; h.len()];
    let mut ref_used = vec![false; r.len()];
    let mut pairs = Vec::new();
    let mut stage = |key_h: &dyn Fn(usize) -> String, key_r: &dyn Fn(usize) -> String| {
        let ref_keys: Vec<String> = (0..r.len()).map(key_r).collect();
        for i in 0..h.len() {
            if hyp_used[i] {
                continue;
            }
            let k = key_h(i);
            if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && ref_keys[j] == k) {
                hyp_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    };
    stage(&|i| h[i].clone(), &|j| r[j].clone());
    stage(&|i| porter_stem(&h[i]), &|j| porter_stem(&r[j]));
    pairs.sort_unstable();
    pairs
}

fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
}

/// Sentence METEOR in [0, 1] with exact and stem matching only.
pub fn meteor(hypothesis: &str, reference: &str) -> f64 {
    let h = tokenize(hypothesis).into_vec();
    let r = tokenize(reference).into_vec();
    let pairs = meteor_alignment(&h, &r);
    let m = pairs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / h.len() as f64;
    let rec = m / r.len() as f64;
    let f_mean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
    let penalty = METEOR_GAMMA * (chunk_count(&pairs) as f64 / m).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub n_items: usize,
    pub mode_label: String,
}

/// Per-item ROUGE-L and METEOR (fractions) alongside the corpus report.
pub fn sentence_scores(hypothesis: &str, reference: &str) -> (f64, f64) {
    (rouge_l(hypothesis, reference), meteor(hypothesis, reference))
}

pub fn aggregate<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    mode_label: impl Into<String>,
) -> Result<MetricReport, MetricError> {
    let bleu = bleu4(hyps, refs)?;
    let n = hyps.len() as f64;
    let (rouge_sum, meteor_sum) = hyps.iter().zip(refs).fold((0.0, 0.0), |(rs, ms), (h, r)| {
        let (rl, mt) = sentence_scores(h.as_ref(), r.as_ref());
        (rs + rl, ms + mt)
    });
    Ok(MetricReport {
        bleu4: bleu,
        rouge_l: 100.0 * rouge_sum / n,
        meteor: 100.0 * meteor_sum / n,
        n_items: hyps.len(),
        mode_label: mode_label.into(),
    })
}

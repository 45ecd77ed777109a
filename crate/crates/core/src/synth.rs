//! Seeded synthetic source databases and test splits. Each test query is a
//! token-level perturbation of one source diff and its reference is that
//! source's message, so a retriever that finds the true source lets an
//! echo generator reproduce the reference exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DiffMessagePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_source: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Fraction of body tokens replaced or dropped in each query.
    pub perturb_rate: f64,
    pub repos: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_source: 200,
            n_test: 50,
            seed: 42,
            perturb_rate: 0.2,
            repos: ["acme/parser", "acme/netkit", "globex/ui", "initech/store"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub source: Corpus,
    pub test: Corpus,
    /// Source id each test query was derived from, in test order.
    pub origins: Vec<String>,
}

const ONSETS: [&str; 16] = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "qu"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "x", "l", "st"];
const VERBS: [&str; 12] = ["fix", "add", "remove", "rename", "refactor", "handle", "update", "guard", "cache", "validate", "simplify", "document"];
const KEYWORDS: [&str; 8] = ["let", "if", "return", "fn", "match", "self", "mut", "for"];

fn word(rng: &mut impl Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(NUCLEI.choose(rng).unwrap());
        w.push_str(CODAS.choose(rng).unwrap());
    }
    w
}

fn vocabulary(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Change {
    file: String,
    hunk: usize,
    removed: Vec<Vec<String>>,
    added: Vec<Vec<String>>,
}

fn render(c: &Change) -> String {
    let mut out = format!(
        "diff --git a/src/{f}.rs b/src/{f}.rs\n--- a/src/{f}.rs\n+++ b/src/{f}.rs\n@@ -{h},{r} +{h},{a} @@\n",
        f = c.file,
        h = c.hunk,
        r = c.removed.len(),
        a = c.added.len()
    );
    for (sign, lines) in [('-', &c.removed), ('+', &c.added)] {
        for line in lines.iter() {
            out.push(sign);
            out.push_str("    ");
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

fn code_line(rng: &mut impl Rng, topic: &[String], vocab: &[String]) -> Vec<String> {
    let len = rng.gen_range(4..=7);
    (0..len)
        .map(|_| match rng.gen_range(0..10) {
            0..=4 => topic.choose(rng).unwrap().clone(),
            5..=6 => KEYWORDS.choose(rng).unwrap().to_string(),
            _ => vocab.choose(rng).unwrap().clone(),
        })
        .collect()
}

fn perturb(rng: &mut impl Rng, c: &Change, rate: f64, vocab: &[String]) -> Change {
    let mut edit = |lines: &Vec<Vec<String>>| -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|line| {
                let mut out = Vec::with_capacity(line.len());
                for tok in line {
                    if rng.gen_bool(rate) {
                        if rng.gen_bool(0.5) {
                            out.push(vocab.choose(rng).unwrap().clone());
                        }
                    } else {
                        out.push(tok.clone());
                    }
                }
                if out.is_empty() {
                    out.push(line[0].clone());
                }
                out
            })
            .collect()
    };
    let mut q = Change { file: c.file.clone(), hunk: c.hunk, removed: edit(&c.removed), added: edit(&c.added) };
    if q.removed == c.removed && q.added == c.added {
        q.added[0].push(vocab.choose(rng).unwrap().clone());
    }
    q
}

pub fn synth_dataset(cfg: &SynthConfig) -> SynthDataset {
    assert!(!cfg.repos.is_empty(), "at least one repo slug");
    assert!(cfg.n_test <= cfg.n_source, "each query needs a distinct source");
    let mut rng = crate::seeded_rng(cfg.seed);
    let vocab = vocabulary(&mut rng, 400 + 6 * cfg.n_source);
    let (shared, mut private) = vocab.split_at(400);

    let mut changes = Vec::with_capacity(cfg.n_source);
    let mut source = Vec::with_capacity(cfg.n_source);
    for i in 0..cfg.n_source {
        let (topic, rest) = private.split_at(6);
        private = rest;
        let topic = topic.to_vec();
        let lines = |rng: &mut rand_chacha::ChaCha8Rng, n| (0..n).map(|_| code_line(rng, &topic, shared)).collect();
        let n_removed = rng.gen_range(1..=3);
        let n_added = rng.gen_range(2..=4);
        let change = Change {
            file: topic[0].clone(),
            hunk: rng.gen_range(1..400),
            removed: lines(&mut rng, n_removed),
            added: lines(&mut rng, n_added),
        };
        let message = format!(
            "{} {} {} in {}",
            VERBS.choose(&mut rng).unwrap(),
            topic[1],
            topic[2],
            topic[0]
        );
        let repo = cfg.repos[i % cfg.repos.len()].clone();
        source.push(
            DiffMessagePair::new(format!("s{i:04}"), render(&change), message)
                .with_repo(repo)
                .with_timestamp(1_600_000_000 + 3600 * i as i64),
        );
        changes.push(change);
    }

    let mut picks: Vec<usize> = (0..cfg.n_source).collect();
    picks.shuffle(&mut rng);
    picks.truncate(cfg.n_test);
    let mut test = Vec::with_capacity(cfg.n_test);
    let mut origins = Vec::with_capacity(cfg.n_test);
    for (j, &s) in picks.iter().enumerate() {
        let q = perturb(&mut rng, &changes[s], cfg.perturb_rate, shared);
        let src = &source[s];
        test.push(
            DiffMessagePair::new(format!("q{j:04}"), render(&q), src.message_text.clone())
                .with_repo(src.repo.clone())
                .with_timestamp(src.timestamp + 60),
        );
        origins.push(src.id.clone());
    }
    SynthDataset {
        source: Corpus::from_entries(source).expect("unique ids"),
        test: Corpus::from_entries(test).expect("unique ids"),
        origins,
    }
}

//! Ablation runs over a test split: retrieve per mode, render a prompt,
//! generate, score. Reports are written as a directory holding
//! `report.json`, `records.jsonl` and `table.txt`.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment::{render_llm_prompt, AugmentedInput, PromptTemplate, TokenBudget};
use crate::corpus::{Corpus, DiffMessagePair};
use crate::generate::Generator;
use crate::metrics::{aggregate, sentence_scores, MetricError, MetricReport};
use crate::retriever::{Bm25Params, HybridWeights, RetrievalMode, RetrievalOptions, RetrieveError, Retriever};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid run options: {0}")]
    Options(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot write report to {path}: {source}")]
    Write { path: String, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    NoRetrieval,
    Random { seed: u64 },
    Bm25Only,
    DenseOnly,
    Hybrid,
}

impl AblationMode {
    pub fn retrieval(&self) -> Option<RetrievalMode> {
        match *self {
            Self::NoRetrieval => None,
            Self::Random { seed } => Some(RetrievalMode::Random { seed }),
            Self::Bm25Only => Some(RetrievalMode::Bm25Only),
            Self::DenseOnly => Some(RetrievalMode::DenseOnly),
            Self::Hybrid => Some(RetrievalMode::Hybrid),
        }
    }
}

impl From<RetrievalMode> for AblationMode {
    fn from(m: RetrievalMode) -> Self {
        match m {
            RetrievalMode::Bm25Only => Self::Bm25Only,
            RetrievalMode::DenseOnly => Self::DenseOnly,
            RetrievalMode::Hybrid => Self::Hybrid,
            RetrievalMode::Random { seed } => Self::Random { seed },
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.retrieval() {
            None => f.write_str("no-retrieval"),
            Some(m) => m.fmt(f),
        }
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "no-retrieval" | "none" => Ok(Self::NoRetrieval),
            _ => s.parse::<RetrievalMode>().map(Self::from),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub hybrid_weights: HybridWeights,
    /// `k` is forced to 1 and the leakage guard is always on.
    pub retrieval: RetrievalOptions,
    /// Restrict each query's retrieval to its own repository.
    pub within_project: bool,
    pub react_template: PromptTemplate,
    pub direct_template: PromptTemplate,
    pub budget: TokenBudget,
    pub dataset_path: Option<PathBuf>,
    pub source_path: Option<PathBuf>,
    /// Unix seconds recorded in the manifest. Callers pick it so reruns
    /// can reproduce byte-identical reports.
    pub timestamp: i64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hybrid_weights: HybridWeights::default(),
            retrieval: RetrievalOptions::default(),
            within_project: false,
            react_template: PromptTemplate::react(),
            direct_template: PromptTemplate::direct(),
            budget: TokenBudget::default(),
            dataset_path: None,
            source_path: None,
            timestamp: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub exemplar_id: Option<String>,
    pub generated: String,
    pub reference: String,
    pub rouge_l: f64,
    pub meteor: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: Option<String>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: ArtifactRef,
    pub source_db: ArtifactRef,
    pub mode: String,
    pub generator: Value,
    pub template: String,
    pub embedder: String,
    pub bm25: Bm25Params,
    pub hybrid_weights: HybridWeights,
    pub retrieval: RetrievalOptions,
    pub within_project: bool,
    pub max_prompt_tokens: usize,
    pub timestamp: i64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub report: MetricReport,
    pub records: Vec<EvalRecord>,
    pub manifest: RunManifest,
}

enum Prepared<'a> {
    Ready { input: AugmentedInput, exemplar: Option<&'a DiffMessagePair> },
    Failed(String),
}

fn prepare<'a>(
    query: &DiffMessagePair,
    retriever: &Retriever<'a>,
    mode: AblationMode,
    opts: &EvalOptions,
    retrieval: &RetrievalOptions,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Prepared<'a> {
    let mut retrieval = retrieval.clone();
    if opts.within_project {
        retrieval.project_filter = Some(query.repo.clone());
    }
    let exemplar = match mode.retrieval() {
        None => None,
        Some(RetrievalMode::Random { .. }) => match retriever.retrieve_random(&query.diff_text, rng, &retrieval) {
            Ok(c) => Some(c[0].ordinal),
            Err(e) => return Prepared::Failed(e.to_string()),
        },
        Some(m) => {
            let w = m.weights(opts.hybrid_weights).expect("ranked mode");
            match retriever.retrieve(&query.diff_text, &w, &retrieval) {
                Ok(c) => Some(c[0].ordinal),
                Err(e) => return Prepared::Failed(e.to_string()),
            }
        }
    };
    let exemplar = exemplar.map(|o| &retriever.corpus().entries()[o]);
    let template = if exemplar.is_some() { &opts.react_template } else { &opts.direct_template };
    match render_llm_prompt(&query.diff_text, exemplar, template, &opts.budget) {
        Ok(input) => Prepared::Ready { input: input.with_query_id(query.id.clone()), exemplar },
        Err(e) => Prepared::Failed(e.to_string()),
    }
}

/// Runs one ablation mode over `test`. Retrieval and rendering are
/// sequential so random mode draws from a single seeded stream in dataset
/// order; generation runs with the generator's concurrency. Failed items
/// score zero and are flagged.
pub fn run_eval<'a>(
    test: &Corpus,
    retriever: &Retriever<'a>,
    mode: AblationMode,
    generator: &dyn Generator,
    opts: &EvalOptions,
) -> Result<EvalRun, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let retrieval = RetrievalOptions { k: 1, exclude_exact: true, ..opts.retrieval.clone() };
    retrieval.validate().map_err(|e: RetrieveError| HarnessError::Options(e.to_string()))?;
    opts.hybrid_weights.validate().map_err(|e| HarnessError::Options(e.to_string()))?;

    let seed = match mode {
        AblationMode::Random { seed } => seed,
        _ => 0,
    };
    let mut rng = crate::seeded_rng(seed);
    let prepared: Vec<Prepared> =
        test.iter().map(|q| prepare(q, retriever, mode, opts, &retrieval, &mut rng)).collect();

    let outputs = crate::par::map_ordered(&prepared, generator.concurrency(), |_, p| match p {
        Prepared::Ready { input, exemplar } => generator.generate(input, *exemplar).map_err(|e| e.to_string()),
        Prepared::Failed(e) => Err(e.clone()),
    });

    let mut records = Vec::with_capacity(test.len());
    for ((query, p), out) in test.iter().zip(&prepared).zip(outputs) {
        let exemplar_id = match p {
            Prepared::Ready { exemplar, .. } => exemplar.map(|e| e.id.clone()),
            Prepared::Failed(_) => None,
        };
        let record = match out {
            Ok(g) => {
                let (rouge_l, meteor) = sentence_scores(&g.message_text, &query.message_text);
                EvalRecord {
                    query_id: query.id.clone(),
                    exemplar_id,
                    generated: g.message_text,
                    reference: query.message_text.clone(),
                    rouge_l,
                    meteor,
                    failed: false,
                    error: None,
                }
            }
            Err(e) => {
                tracing::debug!(query = %query.id, error = %e, "item failed");
                EvalRecord {
                    query_id: query.id.clone(),
                    exemplar_id,
                    generated: String::new(),
                    reference: query.message_text.clone(),
                    rouge_l: 0.0,
                    meteor: 0.0,
                    failed: true,
                    error: Some(e),
                }
            }
        };
        records.push(record);
    }

    let hyps: Vec<&str> = records.iter().map(|r| r.generated.as_str()).collect();
    let refs: Vec<&str> = records.iter().map(|r| r.reference.as_str()).collect();
    let report = aggregate(&hyps, &refs, mode.to_string())?;
    let template = if mode == AblationMode::NoRetrieval { &opts.direct_template } else { &opts.react_template };
    let manifest = RunManifest {
        dataset: ArtifactRef { path: opts.dataset_path.as_ref().map(|p| p.display().to_string()), sha256: test.content_hash() },
        source_db: ArtifactRef {
            path: opts.source_path.as_ref().map(|p| p.display().to_string()),
            sha256: retriever.corpus().content_hash(),
        },
        mode: mode.to_string(),
        generator: generator.describe(),
        template: template.kind().to_string(),
        embedder: retriever.embedder_tag().to_string(),
        bm25: retriever.params(),
        hybrid_weights: opts.hybrid_weights,
        retrieval,
        within_project: opts.within_project,
        max_prompt_tokens: opts.budget.max_total,
        timestamp: opts.timestamp,
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok(EvalRun { report, records, manifest })
}

/// Two-decimal rendering with halves rounded up, applied to the shortest
/// decimal representation so that 9.675 becomes "9.68".
pub fn format_2dp(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(std::iter::repeat(b'0')).take(2)).collect();
    if frac.as_bytes().get(2).is_some_and(|d| *d >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 2;
    let body = format!("{}.{}", std::str::from_utf8(&digits[..split]).unwrap(), std::str::from_utf8(&digits[split..]).unwrap());
    if x < 0.0 && body.bytes().any(|b| b.is_ascii_digit() && b != b'0') {
        format!("-{body}")
    } else {
        body
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub approach: String,
    pub bleu: String,
    pub rouge_l: String,
    pub meteor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_reports(reports: &[MetricReport]) -> ComparisonTable {
    ComparisonTable {
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                approach: r.mode_label.clone(),
                bleu: format_2dp(r.bleu4),
                rouge_l: format_2dp(r.rouge_l),
                meteor: format_2dp(r.meteor),
            })
            .collect(),
    }
}

impl ComparisonTable {
    const HEADER: [&'static str; 4] = ["Approach", "BLEU", "Rouge-L", "METEOR"];

    pub fn to_text(&self) -> String {
        let cells: Vec<[&str; 4]> =
            self.rows.iter().map(|r| [r.approach.as_str(), &r.bleu, &r.rouge_l, &r.meteor]).collect();
        let mut widths = Self::HEADER.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: [&str; 4]| {
            let mut out = format!("{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                out.push_str(&format!("  {c:>w$}"));
            }
            out.push('\n');
            out
        };
        let mut text = line(Self::HEADER);
        for row in cells {
            text.push_str(&line(row));
        }
        text
    }

    /// Numbers are parsed back from the rendered strings, so JSON and text
    /// always agree.
    pub fn to_json(&self) -> Value {
        let num = |s: &str| s.parse::<f64>().map(Value::from).unwrap_or(Value::Null);
        Value::Array(
            self.rows
                .iter()
                .map(|r| json!({ "approach": r.approach, "bleu": num(&r.bleu), "rouge_l": num(&r.rouge_l), "meteor": num(&r.meteor) }))
                .collect(),
        )
    }
}

/// Writes `report.json`, `records.jsonl` and `table.txt` into `dir`,
/// creating it if needed. Returns the comparison table.
pub fn write_report_dir(dir: &Path, runs: &[EvalRun]) -> Result<ComparisonTable, HarnessError> {
    let werr = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(werr(dir))?;
    let reports: Vec<MetricReport> = runs.iter().map(|r| r.report.clone()).collect();
    let table = compare_reports(&reports);

    let summary = json!({
        "runs": runs.iter().map(|r| json!({ "report": r.report, "manifest": r.manifest })).collect::<Vec<_>>(),
        "table": table.to_json(),
    });
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(werr(&path))?;

    let path = dir.join("records.jsonl");
    let mut out = io::BufWriter::new(fs::File::create(&path).map_err(werr(&path))?);
    for run in runs {
        for rec in &run.records {
            let mut v = serde_json::to_value(rec).expect("record serializes");
            v["mode"] = json!(run.report.mode_label);
            writeln!(out, "{v}").map_err(werr(&path))?;
        }
    }
    out.flush().map_err(werr(&path))?;

    let path = dir.join("table.txt");
    fs::write(&path, table.to_text()).map_err(werr(&path))?;
    Ok(table)
}

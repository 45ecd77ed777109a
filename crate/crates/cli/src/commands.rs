use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use react_cmg_core::augment::{render_llm_prompt, PromptTemplate, TemplateKind};
use react_cmg_core::corpus::{filter_corpus, ingest_git_records, load_jsonl, Corpus};
use react_cmg_core::embed::{build_store, EmbeddingStore, LocalHashEmbedder, RemoteEmbedder, LOCAL_PROVIDER_TAG};
use react_cmg_core::generate::{ChatGenerator, GenerateError, Generator, MockEchoGenerator};
use react_cmg_core::harness::{run_eval, write_report_dir, AblationMode, EvalOptions};
use react_cmg_core::retriever::{build_index, InvertedIndex, RetrieveError, Retriever};
use react_cmg_core::synth::{synth_dataset, SynthConfig};
use react_cmg_core::EmbeddingProvider;

use crate::config::{AppConfig, EmbedderKind};
use crate::{git, hook, EvalArgs, Failure, GenerateArgs, GeneratorKind, HookArgs, IndexArgs, IngestArgs, SourceArgs, SynthArgs};

type Outcome = Result<(), Failure>;

fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(base.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn corpus_path(flag: Option<&PathBuf>, cfg: &AppConfig) -> Result<PathBuf, Failure> {
    flag.or(cfg.paths.corpus.as_ref())
        .cloned()
        .ok_or_else(|| Failure::Usage("no corpus given; pass --corpus or set paths.corpus in the config".into()))
}

fn index_base(flag: Option<&PathBuf>, cfg: &AppConfig, corpus: &Path) -> PathBuf {
    flag.or(cfg.paths.index.as_ref()).cloned().unwrap_or_else(|| corpus.with_extension(""))
}

fn remote_embedder(cfg: &AppConfig) -> anyhow::Result<RemoteEmbedder> {
    RemoteEmbedder::from_env(cfg.embedder.remote.clone()).context("remote embedder is not configured")
}

pub fn ingest(cfg: &AppConfig, args: IngestArgs) -> Outcome {
    let out = args
        .out
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| Failure::Usage("no output given; pass --out or set paths.corpus in the config".into()))?;
    let raw = if let Some(path) = &args.from_jsonl {
        load_jsonl(path)?
    } else {
        let dir = args.from_git.as_deref().expect("clap requires one input");
        let slug = match args.repo {
            Some(s) => s,
            None => git::repo_slug(dir)?,
        };
        let records = git::history(dir)?;
        tracing::info!(commits = records.len(), repo = %slug, "read git history");
        ingest_git_records(&records, &slug)?
    };
    let mut filter = cfg.filter.clone();
    if let Some(n) = args.max_tokens {
        filter.max_tokens = n;
    }
    if let Some(n) = args.min_message_tokens {
        filter.min_message_tokens = n;
    }
    filter.validate()?;
    let authors = args.exclude_bots.then(|| raw.authors());
    let (kept, report) = filter_corpus(&raw, &filter, authors.as_ref());
    kept.write_jsonl(&out)?;
    println!("kept {} of {} pairs -> {}", report.kept, raw.len(), out.display());
    println!(
        "dropped: too_long={} too_short={} bot={} empty={}",
        report.dropped_too_long, report.dropped_too_short, report.dropped_bot, report.dropped_empty
    );
    Ok(())
}

pub fn index(cfg: &AppConfig, args: IndexArgs) -> Outcome {
    let corpus_path = corpus_path(args.corpus.as_ref(), cfg)?;
    let base = args.out.clone().unwrap_or_else(|| index_base(None, cfg, &corpus_path));
    let corpus = load_jsonl(&corpus_path)?;
    let workers = args.workers.unwrap_or(cfg.embedder.workers);
    let store = match args.embedder.unwrap_or(cfg.embedder.provider) {
        EmbedderKind::Local => build_store(&corpus, &LocalHashEmbedder, workers),
        EmbedderKind::Remote => build_store(&corpus, &remote_embedder(cfg)?, workers),
    }
    .context("embedding failed")?;
    let index = build_index(&corpus);
    let (idx_path, emb_path) = (with_suffix(&base, "idx"), with_suffix(&base, "emb"));
    index.save(&idx_path).map_err(anyhow::Error::from)?;
    store.save(&emb_path).map_err(anyhow::Error::from)?;
    println!(
        "indexed {} pairs, {} terms, {} embeddings ({}) -> {}, {}",
        corpus.len(),
        index.n_terms(),
        store.len(),
        store.provider_tag(),
        idx_path.display(),
        emb_path.display()
    );
    Ok(())
}

struct SourceDb {
    corpus: Corpus,
    index: InvertedIndex,
    store: EmbeddingStore,
    embedder: Box<dyn EmbeddingProvider>,
    corpus_path: PathBuf,
}

impl SourceDb {
    fn load(args: &SourceArgs, cfg: &AppConfig) -> Result<Self, Failure> {
        let corpus_path = corpus_path(args.corpus.as_ref(), cfg)?;
        let base = index_base(args.index.as_ref(), cfg, &corpus_path);
        let corpus = load_jsonl(&corpus_path)?;
        let index = InvertedIndex::load(&with_suffix(&base, "idx")).map_err(anyhow::Error::from)?;
        let store = EmbeddingStore::load(&with_suffix(&base, "emb")).map_err(anyhow::Error::from)?;
        let embedder: Box<dyn EmbeddingProvider> = if store.provider_tag() == LOCAL_PROVIDER_TAG {
            Box::new(LocalHashEmbedder)
        } else {
            Box::new(remote_embedder(cfg)?)
        };
        Ok(Self { corpus, index, store, embedder, corpus_path })
    }

    fn retriever(&self, cfg: &AppConfig) -> Result<Retriever<'_>, Failure> {
        Retriever::new(&self.corpus, &self.index, &self.store, self.embedder.as_ref(), cfg.bm25)
            .map_err(|e| Failure::Runtime(e.into()))
    }
}

fn generator(args: &SourceArgs, cfg: &AppConfig) -> Box<dyn Generator> {
    match args.generator {
        GeneratorKind::MockEcho => Box::new(MockEchoGenerator),
        GeneratorKind::Chat => {
            let mut g = cfg.generator.clone();
            if let Some(url) = &args.endpoint {
                g.endpoint_url = url.clone();
            }
            if let Some(m) = &args.model {
                g.model_name = m.clone();
            }
            Box::new(ChatGenerator::from_env(g))
        }
    }
}

fn templates(args: &SourceArgs, cfg: &AppConfig) -> anyhow::Result<(PromptTemplate, PromptTemplate)> {
    match args.templates.as_ref().or(cfg.paths.templates.as_ref()) {
        Some(dir) => Ok((PromptTemplate::load(dir, TemplateKind::React)?, PromptTemplate::load(dir, TemplateKind::Direct)?)),
        None => Ok((PromptTemplate::react(), PromptTemplate::direct())),
    }
}

fn read_query(args: &GenerateArgs) -> anyhow::Result<String> {
    let diff = if args.from_staged {
        git::staged_diff(&args.repo_dir)?
    } else {
        match &args.diff_file {
            Some(p) if p.as_os_str() != "-" => {
                std::fs::read_to_string(p).with_context(|| format!("cannot read diff {}", p.display()))?
            }
            _ => {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s).context("cannot read diff from stdin")?;
                s
            }
        }
    };
    if diff.trim().is_empty() {
        return Err(anyhow!("the query diff is empty"));
    }
    Ok(diff)
}

pub fn generate(cfg: &AppConfig, args: GenerateArgs) -> Outcome {
    let mode: AblationMode = args.mode.parse().map_err(Failure::Usage)?;
    let query = read_query(&args)?;
    let (react, direct) = templates(&args.source, cfg)?;

    let db = match mode.retrieval() {
        Some(_) => Some(SourceDb::load(&args.source, cfg)?),
        None => None,
    };
    let exemplar = match (&db, mode.retrieval()) {
        (Some(db), Some(rmode)) => {
            let retriever = db.retriever(cfg)?;
            let mut opts = cfg.retrieval.clone();
            opts.k = 1;
            if args.project_only.is_some() {
                opts.project_filter = args.project_only.clone();
            }
            let found = retriever.retrieve_mode(&query, rmode, cfg.hybrid_weights, &opts).map_err(|e| match e {
                RetrieveError::NoCandidates => Failure::NoCandidates(match &opts.project_filter {
                    Some(repo) => format!("no pair from {repo} other than an exact copy of the query"),
                    None => "the source database has no pair other than an exact copy of the query".into(),
                }),
                other => Failure::Runtime(other.into()),
            })?;
            let c = &found[0];
            let pair = &db.corpus.entries()[c.ordinal];
            if args.show_exemplar {
                eprintln!(
                    "exemplar {} ({}) hybrid={:.4} bm25={:.4} cosine={:.4}\n--- diff\n{}\n--- message\n{}",
                    pair.id,
                    if pair.repo.is_empty() { "-" } else { &pair.repo },
                    c.hybrid,
                    c.bm25_raw,
                    c.cosine_raw,
                    pair.diff_text.trim_end(),
                    pair.message_text
                );
            }
            Some(pair)
        }
        _ => None,
    };

    let template = if exemplar.is_some() { &react } else { &direct };
    let input = render_llm_prompt(&query, exemplar, template, &cfg.budget).map_err(|e| Failure::Runtime(e.into()))?;
    let generator = generator(&args.source, cfg);
    let result = generator.generate(&input, exemplar).map_err(|e: GenerateError| Failure::Generation(e.to_string()))?;
    println!("{}", result.message_text);
    Ok(())
}

fn run_timestamp(flag: Option<i64>) -> i64 {
    flag.or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()).unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
    })
}

pub fn eval(cfg: &AppConfig, args: EvalArgs) -> Outcome {
    let modes: Vec<AblationMode> = if args.modes.is_empty() {
        vec![AblationMode::Hybrid]
    } else {
        args.modes.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(Failure::Usage)?
    };
    let test = load_jsonl(&args.test)?;
    let db = SourceDb::load(&args.source, cfg)?;
    let retriever = db.retriever(cfg)?;
    let (react_template, direct_template) = templates(&args.source, cfg)?;
    let generator = generator(&args.source, cfg);
    let opts = EvalOptions {
        hybrid_weights: cfg.hybrid_weights,
        retrieval: cfg.retrieval.clone(),
        within_project: args.within_project,
        react_template,
        direct_template,
        budget: cfg.budget.clone(),
        dataset_path: Some(args.test.clone()),
        source_path: Some(db.corpus_path.clone()),
        timestamp: run_timestamp(args.timestamp),
    };
    let mut runs = Vec::with_capacity(modes.len());
    for mode in modes {
        let run = run_eval(&test, &retriever, mode, generator.as_ref(), &opts).map_err(anyhow::Error::from)?;
        let failed = run.records.iter().filter(|r| r.failed).count();
        if failed > 0 {
            tracing::warn!(mode = %mode, failed, "some items failed and were scored as zero");
        }
        runs.push(run);
    }
    let out = args.out.or_else(|| cfg.paths.reports.clone()).unwrap_or_else(|| PathBuf::from("reports"));
    let table = write_report_dir(&out, &runs).map_err(anyhow::Error::from)?;
    print!("{}", table.to_text());
    eprintln!("report written to {}", out.display());
    Ok(())
}

pub fn hook_install(config: Option<&Path>, args: HookArgs) -> Outcome {
    if args.uninstall {
        match hook::uninstall(&args.repo_dir, args.force)? {
            Some(p) => eprintln!("removed {}", p.display()),
            None => eprintln!("no {} hook installed", hook::HOOK_NAME),
        }
        return Ok(());
    }
    let project = match args.project {
        Some(p) => p,
        None => git::repo_slug(&args.repo_dir)?,
    };
    let abs = |p: &PathBuf| std::path::absolute(p).unwrap_or_else(|_| p.clone());
    let mut extra = Vec::new();
    if let Some(c) = config {
        extra.extend(["--config".to_string(), abs(&c.to_path_buf()).display().to_string()]);
    }
    if let Some(c) = &args.corpus {
        extra.extend(["--corpus".to_string(), abs(c).display().to_string()]);
    }
    if let Some(i) = &args.index {
        extra.extend(["--index".to_string(), abs(i).display().to_string()]);
    }
    if let Some(g) = args.generator {
        let name = if g == GeneratorKind::Chat { "chat" } else { "mock-echo" };
        extra.extend(["--generator".to_string(), name.to_string()]);
    }
    if let Some(e) = &args.endpoint {
        extra.extend(["--endpoint".to_string(), e.clone()]);
    }
    // Subcommand flags must follow the subcommand; the global --config
    // may precede it.
    let (global, sub): (Vec<_>, Vec<_>) = extra.chunks(2).partition(|kv| kv[0] == "--config");
    let path = hook::install(&args.repo_dir, &project, &global.concat(), &sub.concat(), args.force)?;
    eprintln!("installed {} (project {project})", path.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Outcome {
    if args.n_test > args.n_source {
        return Err(Failure::Usage("--n-test cannot exceed --n-source".into()));
    }
    let data = synth_dataset(&SynthConfig { seed: args.seed, n_source: args.n_source, n_test: args.n_test, ..Default::default() });
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let (src, test) = (args.out_dir.join("source.jsonl"), args.out_dir.join("test.jsonl"));
    data.source.write_jsonl(&src)?;
    data.test.write_jsonl(&test)?;
    println!("wrote {} source pairs -> {}", data.source.len(), src.display());
    println!("wrote {} test pairs -> {}", data.test.len(), test.display());
    Ok(())
}

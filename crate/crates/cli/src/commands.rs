//! Command-line surface: one subcommand per pipeline stage plus search,
//! bench, serve and synth.

use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mathsearch::benchmark::{render_table, RunFile};
use mathsearch::corpus::write_corpus;
use mathsearch::embedding::{embed_batch, EmbedError, EmbedOptions, DEFAULT_TRUNCATE_CHARS};
use mathsearch::informalize::{read_pairs, write_pairs, InformalizeOptions, PROMPT_TEMPLATE_VERSION};
use mathsearch::query::{SearchError, SearchOptions};
use mathsearch::{
    brute_force_search, document_text, evaluate, load_benchmark, recall_at_k, Bm25Index, Bm25Params,
    Corpus, Embedder, EmbeddingCache, EvalConfig, HnswIndex, IdcgMode, ProviderError, SearchEngine,
};

use crate::artifacts::{self, CORPUS_FILE, DIAGNOSTICS_FILE, EMBED_CACHE_FILE, INDEX_FILE, INFORMAL_FILE, VECTORS_FILE};
use crate::config::Config;
use crate::error::{data, usage, Classify, CliError, CliResult, ExitKind};
use crate::manifest::{file_hash, Manifest, Stage, StageRecord};
use crate::output::{render_table as render_results, SearchResponse};

/// Recall the index audit is expected to reach on its sample.
pub const AUDIT_RECALL_THRESHOLD: f64 = 0.95;
const AUDIT_K: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "mathsearch", version, about = "Semantic search over formal theorem libraries")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; `MATHSEARCH_*` variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifacts directory (manifest and stage outputs).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Instruction preset pair.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Use deterministic offline generation and embedding providers.
    #[arg(long, global = true)]
    pub mock_providers: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a library export into the corpus.
    Ingest {
        /// Line-delimited JSON library export.
        #[arg(long)]
        corpus: PathBuf,
        /// Fail when any line produces a diagnostic.
        #[arg(long)]
        strict: bool,
    },
    /// Generate informal names and statements for every theorem.
    Informalize,
    /// Embed the bilingual documents.
    Embed,
    /// Build the HNSW index from the document vectors.
    Index,
    /// Run one query against the built index.
    Search {
        query: String,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        augment: AugmentFlag,
        #[arg(long)]
        json: bool,
    },
    /// Score an engine on a labeled benchmark.
    Bench {
        /// Benchmark file with query groups and labels.
        benchmark: PathBuf,
        #[arg(long, value_enum, default_value_t = EngineKind::Semantic)]
        engine: EngineKind,
        /// Ranking file for `--engine runfile`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Library export to rank with `--engine bm25` instead of the ingested corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "retrieved")]
        idcg_mode: IdcgMode,
        #[command(flatten)]
        augment: AugmentFlag,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP search API.
    Serve {
        /// Listen address; overrides the configuration.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Write a synthetic library export and its self-retrieval benchmark.
    Synth {
        #[arg(long, default_value_t = 500)]
        docs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output library export.
        #[arg(long)]
        corpus: PathBuf,
        /// Output benchmark file.
        #[arg(long)]
        benchmark: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineKind {
    Semantic,
    Bm25,
    Runfile,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct AugmentFlag {
    /// Expand the query with the generation provider.
    #[arg(long, overrides_with = "no_augment")]
    augment: bool,
    /// Search with the raw query.
    #[arg(long, overrides_with = "augment")]
    no_augment: bool,
}

impl AugmentFlag {
    fn resolve(self, default: bool) -> bool {
        match (self.augment, self.no_augment) {
            (true, _) => true,
            (_, true) => false,
            _ => default,
        }
    }
}

impl GlobalArgs {
    pub fn config(&self) -> CliResult<Config> {
        let mut c = Config::from_process_env(self.config.as_deref()).usage()?;
        if let Some(out) = &self.out {
            c.artifacts = out.clone();
        }
        if let Some(p) = &self.preset {
            c.preset = p.clone();
        }
        if self.mock_providers {
            c.mock_providers = true;
        }
        c.validate().usage()?;
        Ok(c)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = cli.global.config()?;
    match cli.command {
        Command::Ingest { corpus, strict } => cmd_ingest(&config, &corpus, strict),
        Command::Informalize => cmd_informalize(&config),
        Command::Embed => cmd_embed(&config),
        Command::Index => cmd_index(&config),
        Command::Search { query, k, augment, json } => {
            cmd_search(&config, &query, k.unwrap_or(config.default_k), augment.resolve(config.augment), json)
        }
        Command::Bench {
            benchmark,
            engine,
            run,
            corpus,
            idcg_mode,
            augment,
            json,
        } => cmd_bench(
            &config,
            &BenchArgs {
                benchmark,
                engine,
                run,
                corpus,
                idcg_mode,
                augment: augment.resolve(config.augment),
                json,
            },
        ),
        Command::Serve { listen } => {
            let mut config = config;
            if let Some(l) = listen {
                config.listen = l;
            }
            cmd_serve(config)
        }
        Command::Synth {
            docs,
            seed,
            corpus,
            benchmark,
        } => cmd_synth(docs, seed, &corpus, &benchmark),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create artifacts directory {}", dir.display()))
        .data()
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn settings(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn record_stage(config: &Config, stage: Stage, input_hash: String, output: &str, settings: BTreeMap<String, String>) -> CliResult<()> {
    let dir = &config.artifacts;
    let mut manifest = Manifest::load(dir).data()?;
    manifest.set(
        stage,
        StageRecord {
            input_hash,
            output: output.to_string(),
            output_hash: file_hash(&dir.join(output)).data()?,
            settings,
        },
    );
    manifest.save(dir).data()
}

/// Hash of the previous stage's output, refusing if that stage is stale.
fn prior_output(config: &Config, stage: Stage) -> CliResult<(Manifest, String)> {
    let manifest = Manifest::load(&config.artifacts).data()?;
    let prev = stage.previous().expect("not the first stage");
    let hash = manifest.check_current(&config.artifacts, prev).data()?.output_hash.clone();
    Ok((manifest, hash))
}

pub fn cmd_ingest(config: &Config, input: &Path, strict: bool) -> CliResult<()> {
    let file = std::fs::File::open(input).with_context(|| format!("cannot open {}", input.display())).data()?;
    let input_hash = file_hash(input).data()?;
    let (corpus, diagnostics) = Corpus::load(BufReader::new(file))
        .with_context(|| format!("cannot read {}", input.display()))
        .data()?;
    ensure_dir(&config.artifacts)?;
    let dir = &config.artifacts;
    write_atomic(&dir.join(DIAGNOSTICS_FILE), |out| {
        for d in &diagnostics {
            serde_json::to_writer(&mut *out, d)?;
            out.push(b'\n');
        }
        Ok(())
    })
    .data()?;
    for d in diagnostics.iter().take(20) {
        eprintln!("warning: {d}");
    }
    let theorems = corpus.searchable().count();
    println!(
        "ingested {} records ({theorems} theorems) from {}; {} diagnostics",
        corpus.len(),
        input.display(),
        diagnostics.len()
    );
    if strict && !diagnostics.is_empty() {
        return Err(data(format!(
            "{} diagnostics with --strict; see {}",
            diagnostics.len(),
            dir.join(DIAGNOSTICS_FILE).display()
        )));
    }
    if corpus.is_empty() {
        return Err(data(format!("{} contains no usable records", input.display())));
    }
    write_atomic(&dir.join(CORPUS_FILE), |out| write_corpus(corpus.records(), out)).data()?;
    record_stage(config, Stage::Ingest, input_hash, CORPUS_FILE, settings(&[("strict", strict.to_string())]))
}

pub fn cmd_informalize(config: &Config) -> CliResult<()> {
    let (manifest, input_hash) = prior_output(config, Stage::Informalize)?;
    let generator = config.generator().usage()?;
    let stage_settings = settings(&[
        ("provider", generator.id().to_string()),
        ("prompt", PROMPT_TEMPLATE_VERSION.to_string()),
    ]);
    let dir = &config.artifacts;
    if manifest.up_to_date(dir, Stage::Informalize, &input_hash, &stage_settings) {
        println!("informalize: up to date");
        return Ok(());
    }
    let corpus = artifacts::load_corpus(&dir.join(CORPUS_FILE)).data()?;
    let records: Vec<_> = corpus.searchable().cloned().collect();
    let out_path = dir.join(INFORMAL_FILE);
    let cache = if out_path.exists() {
        let f = std::fs::File::open(&out_path).with_context(|| format!("cannot open {}", out_path.display())).data()?;
        read_pairs(BufReader::new(f)).with_context(|| format!("cannot read {}", out_path.display())).data()?
    } else {
        Vec::new()
    };
    let opts = InformalizeOptions {
        concurrency: config.concurrency,
        ..InformalizeOptions::default()
    };
    let run = mathsearch::informalize::informalize_all(&records, generator.as_ref(), &cache, &opts);
    let completed: Vec<_> = run.completed().cloned().collect();
    write_atomic(&out_path, |out| write_pairs(&completed, out)).data()?;
    println!(
        "informalized {} of {} theorems ({} reused, {} generated)",
        completed.len(),
        records.len(),
        run.reused,
        run.generated
    );
    if let Some(e) = run.error {
        return Err(CliError {
            kind: ExitKind::Provider,
            error: anyhow::Error::new(e).context(format!(
                "informalization stopped after {} of {} theorems; rerun `mathsearch informalize` to resume",
                completed.len(),
                records.len()
            )),
        });
    }
    record_stage(config, Stage::Informalize, input_hash, INFORMAL_FILE, stage_settings)
}

/// Counts provider calls and texts sent, for reporting cache effectiveness.
struct Counting {
    inner: Arc<dyn Embedder>,
    calls: AtomicUsize,
    texts: AtomicUsize,
}

impl Embedder for Counting {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.texts.fetch_add(texts.len(), Ordering::Relaxed);
        self.inner.embed(texts)
    }
}

fn embed_error(e: EmbedError) -> CliError {
    let kind = match e {
        EmbedError::Provider(_) | EmbedError::Vector(_) => ExitKind::Provider,
        EmbedError::Cache(_) => ExitKind::Data,
    };
    CliError {
        kind,
        error: e.into(),
    }
}

pub fn cmd_embed(config: &Config) -> CliResult<()> {
    let (manifest, input_hash) = prior_output(config, Stage::Embed)?;
    let presets = config.presets().usage()?;
    let embedder = config.embedder().usage()?;
    let stage_settings = settings(&[
        ("preset", presets.name.to_string()),
        ("provider", embedder.id().to_string()),
        ("dim", embedder.dim().to_string()),
        ("truncate", DEFAULT_TRUNCATE_CHARS.to_string()),
    ]);
    let dir = &config.artifacts;
    if manifest.up_to_date(dir, Stage::Embed, &input_hash, &stage_settings) {
        println!("embed: up to date (0 provider calls)");
        return Ok(());
    }
    let corpus = artifacts::load_corpus(&dir.join(CORPUS_FILE)).data()?;
    let pairs: BTreeMap<String, _> = artifacts::load_pairs(&dir.join(INFORMAL_FILE))
        .data()?
        .into_iter()
        .map(|p| (p.theorem_id.clone(), p))
        .collect();
    let mut ids = Vec::new();
    let mut docs = Vec::new();
    for record in corpus.searchable() {
        let pair = pairs.get(&record.id).ok_or_else(|| {
            data(format!("no informal pair for `{}`; rerun `mathsearch informalize`", record.id))
        })?;
        docs.push(document_text(record, pair, presets.doc_format).data()?);
        ids.push(record.id.clone());
    }
    let cache = EmbeddingCache::open(dir.join(EMBED_CACHE_FILE)).data()?;
    let counting = Counting {
        inner: embedder,
        calls: AtomicUsize::new(0),
        texts: AtomicUsize::new(0),
    };
    let opts = EmbedOptions {
        concurrency: config.concurrency,
        ..EmbedOptions::default()
    };
    let texts: Vec<&str> = docs.iter().map(String::as_str).collect();
    let vectors = embed_batch(&texts, &presets.doc, &counting, Some(&cache), &opts).map_err(embed_error)?;
    let entries: Vec<(String, Vec<f32>)> = ids.into_iter().zip(vectors.into_iter().map(|v| v.values)).collect();
    artifacts::write_vectors(&dir.join(VECTORS_FILE), counting.dim(), &entries).data()?;
    let calls = counting.calls.load(Ordering::Relaxed);
    let sent = counting.texts.load(Ordering::Relaxed);
    println!(
        "embedded {} documents with preset `{}` ({calls} provider calls, {} cache hits)",
        entries.len(),
        presets.name,
        entries.len().saturating_sub(sent)
    );
    record_stage(config, Stage::Embed, input_hash, VECTORS_FILE, stage_settings)
}

/// Mean recall@10 of the index against exhaustive search, querying with
/// every 100th stored vector (at least one).
pub fn audit_recall(index: &HnswIndex) -> anyhow::Result<(f64, usize)> {
    let step = 100;
    let mut total = 0.0;
    let mut n = 0;
    for node in (0..index.len()).step_by(step) {
        let q = index.vector(node);
        let approx = index.search(q, AUDIT_K, None)?;
        let exact = brute_force_search(index.iter(), q, AUDIT_K)?;
        total += recall_at_k(&approx, &exact, AUDIT_K);
        n += 1;
    }
    Ok((if n == 0 { 1.0 } else { total / n as f64 }, n))
}

pub fn cmd_index(config: &Config) -> CliResult<()> {
    let (manifest, input_hash) = prior_output(config, Stage::Index)?;
    let params = config.hnsw.params();
    let stage_settings = settings(&[
        ("m", params.m.to_string()),
        ("m0", params.m0.to_string()),
        ("ef_construction", params.ef_construction.to_string()),
        ("ef_search", params.ef_search.to_string()),
        ("seed", params.seed.to_string()),
    ]);
    let dir = &config.artifacts;
    if manifest.up_to_date(dir, Stage::Index, &input_hash, &stage_settings) {
        println!("index: up to date");
        return Ok(());
    }
    let (dim, entries) = artifacts::read_vectors(&dir.join(VECTORS_FILE)).data()?;
    let started = Instant::now();
    let mut index = HnswIndex::new(dim, params).data()?;
    for (id, v) in &entries {
        index.insert(id, v).data()?;
    }
    index.save(dir.join(INDEX_FILE)).data()?;
    let (recall, sampled) = audit_recall(&index).data()?;
    println!(
        "indexed {} vectors (dim {dim}) in {:.2}s; recall audit: {recall:.4} on {sampled} sampled queries (k={AUDIT_K})",
        index.len(),
        started.elapsed().as_secs_f64()
    );
    if recall < AUDIT_RECALL_THRESHOLD {
        eprintln!("warning: audit recall {recall:.4} is below {AUDIT_RECALL_THRESHOLD}; consider raising ef_construction or m");
    }
    record_stage(config, Stage::Index, input_hash, INDEX_FILE, stage_settings)
}

fn search_error(e: SearchError) -> CliError {
    let kind = match &e {
        SearchError::EmptyQuery => ExitKind::Usage,
        SearchError::Embedding(EmbedError::Provider(_) | EmbedError::Vector(_)) => ExitKind::Provider,
        _ => ExitKind::Data,
    };
    CliError {
        kind,
        error: e.into(),
    }
}

fn check_k(k: usize) -> CliResult<()> {
    if (1..=100).contains(&k) {
        Ok(())
    } else {
        Err(usage(format!("k must be between 1 and 100, got {k}")))
    }
}

pub fn cmd_search(config: &Config, query: &str, k: usize, augment: bool, json: bool) -> CliResult<()> {
    check_k(k)?;
    if query.chars().count() > config.max_query_chars {
        return Err(usage(format!("query exceeds {} characters", config.max_query_chars)));
    }
    let engine = artifacts::load_engine(config).data()?;
    let outcome = engine
        .run_search(query, &SearchOptions { k, augment, ef: None })
        .map_err(search_error)?;
    let response = SearchResponse::from_outcome(outcome);
    let mut stdout = std::io::stdout().lock();
    let text = if json {
        serde_json::to_string(&response).data()? + "\n"
    } else {
        render_results(&response)
    };
    stdout.write_all(text.as_bytes()).data()
}

pub struct BenchArgs {
    pub benchmark: PathBuf,
    pub engine: EngineKind,
    pub run: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub idcg_mode: IdcgMode,
    pub augment: bool,
    pub json: bool,
}

fn bm25_index(config: &Config, corpus_path: Option<&Path>) -> CliResult<Bm25Index> {
    let (corpus, pairs) = match corpus_path {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("cannot open {}", p.display())).data()?;
            let (corpus, _) = Corpus::load(BufReader::new(f)).data()?;
            (corpus, BTreeMap::new())
        }
        None => {
            let dir = &config.artifacts;
            Manifest::load(dir).data()?.check_current(dir, Stage::Ingest).data()?;
            let corpus = artifacts::load_corpus(&dir.join(CORPUS_FILE)).data()?;
            let pairs = artifacts::load_pairs(&dir.join(INFORMAL_FILE))
                .data()?
                .into_iter()
                .map(|p| (p.theorem_id.clone(), p))
                .collect();
            (corpus, pairs)
        }
    };
    let docs = corpus.searchable().map(|r| {
        let text = match pairs.get(&r.id) {
            Some(pair) => mathsearch::format_corpus_entry(r, pair).expect("pair keyed by id"),
            None => match &r.docstring {
                Some(d) => format!("{}\n{d}", r.formal_statement),
                None => r.formal_statement.clone(),
            },
        };
        (r.id.clone(), text)
    });
    Bm25Index::new(docs.collect::<Vec<_>>(), Bm25Params::default())
        .map_err(|_| data("the corpus has no theorems to rank"))
}

pub fn cmd_bench(config: &Config, args: &BenchArgs) -> CliResult<()> {
    let groups = load_benchmark(&args.benchmark).data()?;
    let eval = EvalConfig {
        idcg_mode: args.idcg_mode,
        ..EvalConfig::default()
    };
    let (name, report) = match args.engine {
        EngineKind::Semantic => {
            let engine: SearchEngine = artifacts::load_engine(config).data()?;
            let augment = args.augment;
            let rank = |q: &str, depth: usize| -> Result<Vec<String>, mathsearch::benchmark::EngineError> {
                let out = engine.run_search(q, &SearchOptions { k: depth, augment, ef: None })?;
                Ok(out.results.into_iter().map(|r| r.theorem.id).collect())
            };
            let name = format!("semantic ({}, augment={augment})", engine.presets().name);
            (name, evaluate(&rank, &groups, &eval))
        }
        EngineKind::Bm25 => {
            let index = bm25_index(config, args.corpus.as_deref())?;
            ("bm25".to_string(), evaluate(&index, &groups, &eval))
        }
        EngineKind::Runfile => {
            let path = args.run.as_ref().ok_or_else(|| usage("--engine runfile needs --run <FILE>"))?;
            let f = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display())).data()?;
            let run = RunFile::read(BufReader::new(f)).data()?;
            (format!("runfile {}", path.display()), evaluate(&run, &groups, &eval))
        }
    };
    let report = report.map_err(|e| {
        let provider = e
            .source
            .downcast_ref::<SearchError>()
            .is_some_and(|s| matches!(s, SearchError::Embedding(EmbedError::Provider(_))));
        CliError {
            kind: if provider { ExitKind::Provider } else { ExitKind::Data },
            error: e.into(),
        }
    })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).data()?);
    } else {
        print!("{}", render_table(&report, &name));
    }
    Ok(())
}

pub fn cmd_serve(config: Config) -> CliResult<()> {
    let engine = artifacts::load_engine(&config).data()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start async runtime")
        .data()?;
    runtime.block_on(crate::service::serve(config, Arc::new(engine))).data()
}

pub fn cmd_synth(docs: usize, seed: u64, corpus: &Path, benchmark: &Path) -> CliResult<()> {
    if docs == 0 {
        return Err(usage("--docs must be at least 1"));
    }
    let synth = crate::synth::generate(docs, seed);
    synth.write_corpus(corpus).data()?;
    synth.write_benchmark(benchmark).data()?;
    println!(
        "wrote {} records to {} and {} query groups to {}",
        synth.records.len(),
        corpus.display(),
        synth.theorems.len(),
        benchmark.display()
    );
    Ok(())
}

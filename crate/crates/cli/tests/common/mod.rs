#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use mathsearch::embedding::{embed_batch, EmbedOptions};
use mathsearch::provider::{MockEmbedder, MockGenerator};
use mathsearch::{
    format_corpus_entry, informalize, Corpus, Embedder, HnswIndex, HnswParams, PresetPair, ProviderError,
    SearchEngine,
};
use mathsearch_cli::config::Config;
use mathsearch_cli::service::{self, AppState};
use mathsearch_cli::synth;

pub const MOCK_DIM: usize = 256;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mathsearch"))
}

pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .env_remove("MATHSEARCH_CONFIG")
        .args(args)
        .output()
        .expect("spawn mathsearch")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// An engine over `n` synthetic theorems, built in-process with the mock
/// providers and the given embedder for queries.
pub fn engine_with(n: usize, query_embedder: Arc<dyn Embedder>) -> SearchEngine {
    let synth = synth::generate(n, 11);
    let (corpus, _) = Corpus::build(synth.records);
    let presets = PresetPair::default_pair();
    let doc_embedder = MockEmbedder::new(MOCK_DIM);
    let mut pairs = Vec::new();
    let mut docs = Vec::new();
    let mut ids = Vec::new();
    for r in corpus.searchable() {
        let pair = informalize(r, &MockGenerator).unwrap();
        docs.push(format_corpus_entry(r, &pair).unwrap());
        ids.push(r.id.clone());
        pairs.push(pair);
    }
    let texts: Vec<&str> = docs.iter().map(String::as_str).collect();
    let vectors = embed_batch(&texts, &presets.doc, &doc_embedder, None, &EmbedOptions::default()).unwrap();
    let mut index = HnswIndex::new(MOCK_DIM, HnswParams::default()).unwrap();
    for (id, v) in ids.iter().zip(&vectors) {
        index.insert(id, &v.values).unwrap();
    }
    SearchEngine::new(Arc::new(corpus), pairs, Arc::new(index), query_embedder, presets)
        .unwrap()
        .with_augmenter(Arc::new(MockGenerator))
}

pub fn mock_engine(n: usize) -> SearchEngine {
    engine_with(n, Arc::new(MockEmbedder::new(MOCK_DIM)))
}

/// Embedding provider that is unreachable.
pub struct DownEmbedder;

impl Embedder for DownEmbedder {
    fn id(&self) -> &str {
        "down"
    }

    fn dim(&self) -> usize {
        MOCK_DIM
    }

    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Err(ProviderError::Status {
            status: 400,
            body: "provider unavailable".into(),
        })
    }
}

/// A running in-process server; dropped servers shut down.
pub struct Server {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn start(config: Config, engine: SearchEngine) -> Server {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let state = AppState::new(config, Arc::new(engine));
                service::run(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server {
            base: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

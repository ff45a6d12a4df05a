//! Stage output files and loading them back into a search engine.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context};
use mathsearch::informalize::read_pairs;
use mathsearch::{Corpus, HnswIndex, InformalPair, PresetPair, SearchEngine};

use crate::config::Config;
use crate::manifest::{Manifest, Stage};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const INFORMAL_FILE: &str = "informal.jsonl";
pub const EMBED_CACHE_FILE: &str = "embeddings.cache";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const INDEX_FILE: &str = "index.hnsw";

const VECTORS_MAGIC: &[u8; 8] = b"MSVECS01";

/// Document vectors in corpus order: `magic | dim u32 | count u32`, then per
/// entry `id length u32 | id bytes | dim × f32`, all little-endian.
pub fn write_vectors(path: &Path, dim: usize, entries: &[(String, Vec<f32>)]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?);
        out.write_all(VECTORS_MAGIC)?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        out.write_all(&(entries.len() as u32).to_le_bytes())?;
        for (id, v) in entries {
            ensure!(v.len() == dim, "vector for `{id}` has dimension {}, expected {dim}", v.len());
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            for x in v {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_vectors(path: &Path) -> anyhow::Result<(usize, Vec<(String, Vec<f32>)>)> {
    let mut input = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    ensure!(&magic == VECTORS_MAGIC, "{} is not a vectors file", path.display());
    let mut word = [0u8; 4];
    let mut read_u32 = |input: &mut BufReader<File>| -> anyhow::Result<usize> {
        input.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let dim = read_u32(&mut input)?;
    let count = read_u32(&mut input)?;
    let mut entries = Vec::with_capacity(count);
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let len = read_u32(&mut input)?;
        let mut id = vec![0u8; len];
        input.read_exact(&mut id)?;
        input.read_exact(&mut buf)?;
        let v = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push((String::from_utf8(id).context("vector id is not UTF-8")?, v));
    }
    Ok((dim, entries))
}

pub fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    let file = File::open(path).with_context(|| format!("cannot open corpus {}", path.display()))?;
    let parsed = mathsearch::parse_corpus(BufReader::new(file))?;
    if parsed.schema_errors() > 0 {
        bail!("{} has {} malformed lines; rerun ingest", path.display(), parsed.schema_errors());
    }
    Ok(Corpus::from_resolved(parsed.records))
}

pub fn load_pairs(path: &Path) -> anyhow::Result<Vec<InformalPair>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_pairs(BufReader::new(file))?.iter().map(|c| c.pair()).collect())
}

/// Everything a search engine is built from.
pub struct Loaded {
    pub corpus: Arc<Corpus>,
    pub pairs: Vec<InformalPair>,
    pub index: Arc<HnswIndex>,
    pub presets: PresetPair,
    /// Embedding provider id the index was built with, when known.
    pub provider_id: Option<String>,
}

struct Paths {
    corpus: PathBuf,
    informal: PathBuf,
    index: PathBuf,
}

fn paths(config: &Config) -> Paths {
    let dir = &config.artifacts;
    Paths {
        corpus: config.corpus_path.clone().unwrap_or_else(|| dir.join(CORPUS_FILE)),
        informal: config.informal_path.clone().unwrap_or_else(|| dir.join(INFORMAL_FILE)),
        index: config.index_path.clone().unwrap_or_else(|| dir.join(INDEX_FILE)),
    }
}

/// Loads corpus, informal pairs and index. When the artifacts directory has a
/// manifest and no path is overridden, every stage must be current.
pub fn load(config: &Config) -> anyhow::Result<Loaded> {
    let p = paths(config);
    let overridden = config.corpus_path.is_some() || config.informal_path.is_some() || config.index_path.is_some();
    let manifest = Manifest::load(&config.artifacts)?;
    let mut presets = config.presets()?;
    let mut provider_id = None;
    if !overridden {
        manifest.check_current(&config.artifacts, Stage::Index)?;
        let embed: &BTreeMap<String, String> = &manifest.get(Stage::Embed).expect("checked").settings;
        if let Some(name) = embed.get("preset") {
            presets = PresetPair::named(name).with_context(|| format!("manifest names unknown preset `{name}`"))?;
        }
        provider_id = embed.get("provider").cloned();
    }
    let corpus = Arc::new(load_corpus(&p.corpus)?);
    let pairs = load_pairs(&p.informal)?;
    let index = Arc::new(HnswIndex::load(&p.index).with_context(|| format!("cannot load index {}", p.index.display()))?);
    Ok(Loaded {
        corpus,
        pairs,
        index,
        presets,
        provider_id,
    })
}

pub fn build_engine(config: &Config, loaded: Loaded) -> anyhow::Result<SearchEngine> {
    let embedder = config.embedder()?;
    if let Some(built_with) = &loaded.provider_id {
        ensure!(
            built_with == embedder.id(),
            "index was built with embedding provider `{built_with}` but `{}` is configured",
            embedder.id()
        );
    }
    ensure!(
        embedder.dim() == loaded.index.dim(),
        "index dimension {} does not match embedding provider dimension {}",
        loaded.index.dim(),
        embedder.dim()
    );
    let mut engine = SearchEngine::new(loaded.corpus, loaded.pairs, loaded.index, embedder, loaded.presets)?;
    if config.mock_providers || config.generation.is_some() {
        engine = engine.with_augmenter(config.generator()?);
    }
    Ok(engine)
}

pub fn load_engine(config: &Config) -> anyhow::Result<SearchEngine> {
    build_engine(config, load(config)?)
}
